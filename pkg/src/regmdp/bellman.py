"""Regularized Bellman operators, policy evaluation and relative value/policy iteration.

All operators use the conditional-entropy regularizer with a baseline policy
``pi_ref`` and learning rate ``eta``; the entropy penalty is scaled by
``1/eta`` everywhere, and ``eta = inf`` gives the classical hard-max operators.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import NoConvergence, SingularChain, SupportViolation
from .mdp import FiniteMdp, GainEstimate, OccupancyMeasure, stationary_distribution


def is_hard(eta) -> bool:
    return math.isinf(eta)


def q_values(mdp: FiniteMdp, V) -> np.ndarray:
    """``r(x,a) + sum_y P(y|x,a) V(y)``."""
    return mdp.reward + mdp.transition @ V


def _log_baseline(pi_ref) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(pi_ref)


def _row_logsumexp(t: np.ndarray) -> np.ndarray:
    m = t.max(axis=1)
    if not np.all(np.isfinite(m)):
        raise SupportViolation("baseline policy has an empty support row")
    return m + np.log(np.exp(t - m[:, None]).sum(axis=1))


def entropy_penalty(pi, pi_ref, eta) -> np.ndarray:
    """``(1/eta) log(pi/pi_ref)`` per state-action; zero where ``pi`` is zero or eta is inf.

    Raises :class:`SupportViolation` if ``pi`` puts mass outside the baseline's support.
    """
    pi = np.asarray(pi, dtype=float)
    if is_hard(eta):
        return np.zeros_like(pi)
    pi_ref = np.asarray(pi_ref, dtype=float)
    bad = (pi > 0) & ~(pi_ref > 0)
    if np.any(bad):
        index = tuple(int(i) for i in np.argwhere(bad)[0])
        raise SupportViolation(f"policy acts at {index} where the baseline has no support", index)
    out = np.zeros_like(pi)
    live = pi > 0
    out[live] = np.log(pi[live] / pi_ref[live]) / eta
    return out


def regularized_reward(mdp: FiniteMdp, pi, pi_ref, eta) -> np.ndarray:
    """Per-state reward of ``pi`` net of the entropy penalty."""
    pi = np.asarray(pi, dtype=float)
    return np.sum(pi * (mdp.reward - entropy_penalty(pi, pi_ref, eta)), axis=1)


def bellman_policy_op(mdp: FiniteMdp, V, pi, pi_ref, eta) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    return regularized_reward(mdp, pi, pi_ref, eta) + np.sum(pi * (mdp.transition @ V), axis=1)


def bellman_opt_op(mdp: FiniteMdp, V, pi_ref, eta) -> np.ndarray:
    """Baseline-weighted log-sum-exp of the action values (hard max over the support at eta = inf)."""
    Q = q_values(mdp, V)
    log_ref = _log_baseline(pi_ref)
    if is_hard(eta):
        masked = np.where(np.isfinite(log_ref), Q, -np.inf)
        out = masked.max(axis=1)
        if not np.all(np.isfinite(out)):
            raise SupportViolation("baseline policy has an empty support row")
        return out
    return _row_logsumexp(eta * Q + log_ref) / eta


def greedy_policy(mdp: FiniteMdp, V, pi_ref, eta) -> np.ndarray:
    """Baseline-tilted softmax of the advantages; lexicographic one-hot argmax at eta = inf."""
    Q = q_values(mdp, V)
    log_ref = _log_baseline(pi_ref)
    if is_hard(eta):
        masked = np.where(np.isfinite(log_ref), Q, -np.inf)
        best = np.argmax(masked, axis=1)
        policy = np.zeros_like(Q)
        policy[np.arange(Q.shape[0]), best] = 1.0
        return policy
    t = eta * (Q - np.asarray(V, dtype=float)[:, None]) + log_ref
    t = t - t.max(axis=1, keepdims=True)
    weights = np.exp(t)
    return weights / weights.sum(axis=1, keepdims=True)


class PolicyEvaluation(NamedTuple):
    """Gain, normalized values and regularized advantages of a fixed policy."""

    gain: GainEstimate
    value: np.ndarray
    advantage: np.ndarray
    measure: OccupancyMeasure


def evaluate_policy_regularized(mdp: FiniteMdp, pi, pi_ref, eta) -> PolicyEvaluation:
    """Solve the regularized Bellman equations of ``pi`` exactly.

    The values are normalized so that their expectation under the stationary
    distribution of ``pi`` is zero.
    """
    pi = np.asarray(pi, dtype=float)
    n = mdp.num_states
    measure = stationary_distribution(mdp, pi)
    nu = measure.state_marginal
    chain = np.einsum("xa,xay->xy", pi, mdp.transition)
    penalty = entropy_penalty(pi, pi_ref, eta)
    reward_pi = np.sum(pi * (mdp.reward - penalty), axis=1)

    system = np.zeros((n + 1, n + 1))
    system[:n, :n] = np.eye(n) - chain
    system[:n, n] = 1.0
    system[n, :n] = nu
    rhs = np.append(reward_pi, 0.0)
    try:
        solution = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularChain(f"policy evaluation system is singular: {exc}") from exc
    V, rho_reg = solution[:n], float(solution[n])

    rho = float(np.sum(measure.mu * mdp.reward))
    with np.errstate(divide="ignore", invalid="ignore"):
        if is_hard(eta):
            penalty_full = 0.0
        else:
            penalty_full = (np.log(pi) - _log_baseline(pi_ref)) / eta
        advantage = mdp.reward - penalty_full - rho_reg + mdp.transition @ V - V[:, None]
    gain = GainEstimate(rho, rho if is_hard(eta) else rho_reg)
    return PolicyEvaluation(gain, V, advantage, measure)


def performance_difference(mdp: FiniteMdp, pi_a, pi_b, pi_ref, eta) -> tuple[float, float]:
    """Both sides of the regularized performance-difference identity.

    ``lhs = rho~(pi_a) - rho~(pi_b)``.  ``rhs`` weights, by the stationary
    measure of ``pi_a``, the one-step advantage built from the value and gain
    of ``pi_b`` and the entropy penalty of the acting policy ``pi_a``.
    """
    ev_a = evaluate_policy_regularized(mdp, pi_a, pi_ref, eta)
    ev_b = evaluate_policy_regularized(mdp, pi_b, pi_ref, eta)
    lhs = ev_a.gain.value - ev_b.gain.value
    Vb = ev_b.value
    step = (mdp.reward - entropy_penalty(pi_a, pi_ref, eta) - ev_b.gain.value
            + mdp.transition @ Vb - Vb[:, None])
    rhs = float(np.sum(ev_a.measure.mu * step))
    return lhs, rhs


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-10
    max_iters: int = 100_000
    ref_state: int = 0
    record_trace: bool = True


@dataclass(frozen=True, eq=False)
class SolveReport:
    value: np.ndarray
    policy: np.ndarray
    gain: GainEstimate
    iterations: int
    residual: float
    trace: list = field(default_factory=list)
    converged: bool = True

    def to_dict(self) -> dict:
        return {
            "gain": {"rho": self.gain.rho, "regularized": self.gain.regularized},
            "value": self.value.tolist(),
            "policy": self.policy.tolist(),
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
            "trace": [[res, g] for res, g in self.trace],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _final_gain(mdp, policy, offset, eta) -> GainEstimate:
    if is_hard(eta):
        return GainEstimate(offset, offset)
    try:
        rho = float(np.sum(stationary_distribution(mdp, policy).mu * mdp.reward))
    except SingularChain:
        rho = math.nan
    return GainEstimate(rho, offset)


def fixpoint_residual(mdp: FiniteMdp, V, gain, pi_ref, eta) -> np.ndarray:
    """Per-state violation of the regularized average-reward optimality equations."""
    return np.asarray(V) - (bellman_opt_op(mdp, V, pi_ref, eta) - gain)


def _iterate(mdp, pi_ref, eta, cfg, v0, update, name):
    cfg = cfg or SolverConfig()
    V = np.zeros(mdp.num_states) if v0 is None else np.array(v0, dtype=float)
    trace = []
    residual, offset = math.inf, math.nan
    for it in range(1, cfg.max_iters + 1):
        TV, offset = update(V)
        V_next = TV - TV[cfg.ref_state]
        residual = float(np.max(np.abs(V_next - V)))
        V = V_next
        if cfg.record_trace:
            trace.append((residual, offset))
        if residual <= cfg.tol:
            policy = greedy_policy(mdp, V, pi_ref, eta)
            return SolveReport(V, policy, _final_gain(mdp, policy, offset, eta), it, residual, trace)
    policy = greedy_policy(mdp, V, pi_ref, eta)
    partial = SolveReport(V, policy, GainEstimate(offset, offset), cfg.max_iters, residual, trace, converged=False)
    raise NoConvergence(f"{name} did not reach tolerance {cfg.tol} in {cfg.max_iters} iterations "
                        f"(last residual {residual:.3g})", trace, partial)


def regularized_value_iteration(mdp: FiniteMdp, pi_ref, eta, cfg: SolverConfig | None = None, v0=None) -> SolveReport:
    """Relative value iteration on the regularized optimality operator.

    Each sweep subtracts the operator's value at the reference state; that
    offset converges to the optimal regularized gain.
    """
    ref = (cfg or SolverConfig()).ref_state

    def update(V):
        TV = bellman_opt_op(mdp, V, pi_ref, eta)
        return TV, float(TV[ref])

    return _iterate(mdp, pi_ref, eta, cfg, v0, update, "regularized value iteration")


def regularized_policy_iteration(mdp: FiniteMdp, pi_ref, eta, cfg: SolverConfig | None = None,
                                 inner_steps=math.inf, v0=None) -> SolveReport:
    """Regularized (modified) policy iteration.

    ``inner_steps`` policy-operator applications follow every greedy step;
    ``math.inf`` evaluates the greedy policy exactly instead.
    """
    ref = (cfg or SolverConfig()).ref_state
    if not (inner_steps == math.inf or (int(inner_steps) == inner_steps and inner_steps >= 1)):
        raise ValueError(f"inner_steps must be a positive integer or inf, got {inner_steps}")

    def update(V):
        pi = greedy_policy(mdp, V, pi_ref, eta)
        if inner_steps == math.inf:
            ev = evaluate_policy_regularized(mdp, pi, pi_ref, eta)
            return ev.value, ev.gain.value
        W = V
        for _ in range(int(inner_steps)):
            W = bellman_policy_op(mdp, W, pi, pi_ref, eta)
        return W, float(W[ref] - V[ref]) / inner_steps

    return _iterate(mdp, pi_ref, eta, cfg, v0, update, "regularized policy iteration")
