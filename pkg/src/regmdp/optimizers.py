"""Mirror Descent and Dual Averaging policy optimizers.

Each step maps an :class:`IterationState` to the next one on a given MDP.
The Mirror Descent family (exact MD, REPS, DPP, TRPO, ModRegPI-m) regularizes
towards the previous iterate; the Dual Averaging family (DA, DA-RV)
regularizes towards the uniform policy with an increasing rate ``eta_k``.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .bellman import (
    SolverConfig,
    bellman_opt_op,
    bellman_policy_op,
    evaluate_policy_regularized,
    greedy_policy,
    regularized_policy_iteration,
    regularized_value_iteration,
)
from .errors import DualNotConverged, RegMdpError, SingularChain
from .mdp import FiniteMdp, OccupancyMeasure, policy_gain, stationary_distribution, uniform_policy


class Family(enum.Enum):
    MD = "md"
    REPS = "reps"
    DPP = "dpp"
    TRPO = "trpo"
    MODREGPI = "modregpi"
    DA = "da"
    DARV = "darv"
    REGVI = "regvi"


class Schedule(enum.Enum):
    CONSTANT = "const"
    LINEAR = "linear"


DUAL_AVERAGING = (Family.DA, Family.DARV)


@dataclass(frozen=True)
class DualConfig:
    """Gradient descent with Armijo backtracking on the REPS dual."""

    tol: float = 1e-9
    max_iters: int = 100_000
    armijo: float = 1e-4
    shrink: float = 0.5
    initial_step: float = 1.0


@dataclass(frozen=True)
class AlgorithmSpec:
    family: Family
    eta: float
    schedule: Schedule | None = None
    m: int = 1
    solver: SolverConfig = field(default_factory=SolverConfig)
    dual: DualConfig = field(default_factory=DualConfig)
    exact_method: str = "vi"  # inner solver of the exact MD and DA-RV steps: "vi" or "pi"

    def __post_init__(self):
        family = Family(self.family)
        object.__setattr__(self, "family", family)
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.exact_method not in ("vi", "pi"):
            raise ValueError(f"exact_method must be 'vi' or 'pi', got {self.exact_method!r}")
        if family is Family.MODREGPI and self.m < 1:
            raise ValueError("ModRegPI needs m >= 1")
        schedule = self.schedule
        if schedule is None:
            schedule = Schedule.LINEAR if family in DUAL_AVERAGING else Schedule.CONSTANT
        object.__setattr__(self, "schedule", Schedule(schedule))

    @classmethod
    def parse(cls, text: str, eta: float, schedule=None, **kwargs) -> "AlgorithmSpec":
        """Build a spec from names like ``trpo`` or ``modregpi:20``."""
        name, _, arg = text.lower().partition(":")
        family = Family(name)
        if family is Family.MODREGPI:
            kwargs["m"] = int(arg or 1)
        elif arg:
            raise ValueError(f"algorithm {name!r} takes no argument")
        return cls(family, eta, schedule, **kwargs)

    @property
    def label(self) -> str:
        if self.family is Family.MODREGPI:
            return f"modregpi:{self.m}"
        return self.family.value

    def eta_at(self, k: int) -> float:
        """Rate used for the step that produces iterate ``k`` (k >= 1)."""
        return self.eta * k if self.schedule is Schedule.LINEAR else self.eta


@dataclass(frozen=True, eq=False)
class IterationState:
    k: int
    policy: np.ndarray
    value: np.ndarray
    gain_history: tuple = ()
    eta_k: float = math.nan
    residual: float = math.nan
    measure: OccupancyMeasure | None = None

    @classmethod
    def initial(cls, mdp: FiniteMdp, policy=None) -> "IterationState":
        if policy is None:
            policy = uniform_policy(mdp.num_states, mdp.num_actions)
        return cls(0, np.array(policy, dtype=float), np.zeros(mdp.num_states))

    @property
    def gain(self) -> float:
        return self.gain_history[-1] if self.gain_history else math.nan


def _normalize_rows(log_weights: np.ndarray) -> np.ndarray:
    t = log_weights - log_weights.max(axis=1, keepdims=True)
    w = np.exp(t)
    return w / w.sum(axis=1, keepdims=True)


def _advance(state: IterationState, policy, value, eta_k, measure=None) -> IterationState:
    residual = float(np.max(np.abs(policy - state.policy)))
    return replace(state, k=state.k + 1, policy=policy, value=value, eta_k=eta_k,
                   residual=residual, measure=measure)


def _relative(W, ref):
    return W - W[ref]


def solve_regularized(mdp: FiniteMdp, pi_ref, eta, cfg: SolverConfig | None = None, v0=None, method: str = "vi"):
    """Regularized control solve by relative value iteration or by exact policy iteration.

    Both reach the same fixed point; policy iteration needs far fewer sweeps but
    raises :class:`SingularChain` when a greedy policy's chain is not unichain.
    """
    if method == "pi":
        return regularized_policy_iteration(mdp, pi_ref, eta, cfg, math.inf, v0=v0)
    return regularized_value_iteration(mdp, pi_ref, eta, cfg, v0=v0)


def md_exact_step_conditional(mdp: FiniteMdp, state: IterationState, eta, cfg: SolverConfig | None = None,
                              method: str = "vi") -> IterationState:
    """Full Mirror Descent step with the conditional-entropy divergence to the current policy."""
    report = solve_regularized(mdp, state.policy, eta, cfg, state.value, method)
    return _advance(state, report.policy, report.value, eta)


def reps_dual(mdp: FiniteMdp, V, mu_ref, eta):
    """Value and gradient of the relative-entropy dual ``(1/eta) log sum mu' exp(eta A_V)``."""
    A = mdp.reward + mdp.transition @ V - V[:, None]
    live = mu_ref > 0
    t = np.full(A.shape, -np.inf)
    t[live] = eta * A[live] + np.log(mu_ref[live])
    m = t.max()
    w = np.exp(t - m)
    total = w.sum()
    value = (m + math.log(total)) / eta
    w /= total
    grad = np.einsum("xa,xay->y", w, mdp.transition) - w.sum(axis=1)
    return value, grad, w


def minimize_reps_dual(mdp: FiniteMdp, mu_ref, eta, cfg: DualConfig | None = None, v0=None):
    """Returns ``(V, dual value, normalized weights, iterations)``."""
    cfg = cfg or DualConfig()
    V = np.zeros(mdp.num_states) if v0 is None else np.array(v0, dtype=float)
    value, grad, w = reps_dual(mdp, V, mu_ref, eta)
    step = cfg.initial_step
    for it in range(cfg.max_iters):
        gnorm = float(np.max(np.abs(grad)))
        if gnorm < cfg.tol:
            return V, value, w, it
        sq = float(grad @ grad)
        # near the optimum the required decrease drops below the rounding error of the dual value
        slack = 4 * np.finfo(float).eps * max(1.0, abs(value))
        while True:
            cand = V - step * grad
            cand_value, cand_grad, cand_w = reps_dual(mdp, cand, mu_ref, eta)
            if cand_value <= value - cfg.armijo * step * sq + slack:
                break
            step *= cfg.shrink
            if step < 1e-300:
                raise DualNotConverged("line search failed on the REPS dual", gnorm)
        # next trial step: Barzilai-Borwein secant estimate, doubling as a fallback
        s_vec, y_vec = cand - V, cand_grad - grad
        curvature = float(s_vec @ y_vec)
        step = float(s_vec @ s_vec) / curvature if curvature > 0 else 2.0 * step
        V, value, grad, w = cand, cand_value, cand_grad, cand_w
    raise DualNotConverged(f"REPS dual not minimized in {cfg.max_iters} iterations "
                           f"(gradient sup-norm {np.max(np.abs(grad)):.3g})", float(np.max(np.abs(grad))))


def reps_step(mdp: FiniteMdp, state: IterationState, eta, dual_cfg: DualConfig | None = None) -> IterationState:
    """Mirror Descent step with the joint relative entropy, solved through its dual."""
    measure = state.measure if state.measure is not None else stationary_distribution(mdp, state.policy)
    V, _, weights, _ = minimize_reps_dual(mdp, measure.mu, eta, dual_cfg, v0=state.value)
    new_measure = OccupancyMeasure(weights)
    policy = new_measure.policy(fallback=state.policy)
    return _advance(state, policy, V - V[0], eta, new_measure)


def dpp_step(mdp: FiniteMdp, state: IterationState, eta, ref_state: int = 0) -> IterationState:
    """One regularized value-iteration sweep with the current policy as baseline."""
    policy = greedy_policy(mdp, state.value, state.policy, eta)
    value = _relative(bellman_opt_op(mdp, state.value, state.policy, eta), ref_state)
    return _advance(state, policy, value, eta)


def regvi_step(mdp: FiniteMdp, state: IterationState, eta, ref_state: int = 0) -> IterationState:
    """One regularized value-iteration sweep with a fixed uniform baseline."""
    uniform = uniform_policy(mdp.num_states, mdp.num_actions)
    policy = greedy_policy(mdp, state.value, uniform, eta)
    value = _relative(bellman_opt_op(mdp, state.value, uniform, eta), ref_state)
    return _advance(state, policy, value, eta)


def trpo_exact_step(mdp: FiniteMdp, state: IterationState, eta) -> IterationState:
    """Exact TRPO: ``pi_{k+1} ∝ pi_k exp(eta A^{pi_k})`` with the unregularized advantage."""
    ev = evaluate_policy_regularized(mdp, state.policy, state.policy, math.inf)
    with np.errstate(divide="ignore"):
        log_pi = np.log(state.policy)
    policy = _normalize_rows(log_pi + eta * ev.advantage)
    return _advance(state, policy, ev.value, eta)


def mod_reg_pi_step(mdp: FiniteMdp, state: IterationState, eta, m: int, ref_state: int = 0) -> IterationState:
    """Greedy step followed by ``m`` applications of the regularized policy operator."""
    policy = greedy_policy(mdp, state.value, state.policy, eta)
    W = state.value
    for _ in range(m):
        W = bellman_policy_op(mdp, W, policy, state.policy, eta)
    return _advance(state, policy, _relative(W, ref_state), eta)


def da_step(mdp: FiniteMdp, state: IterationState, eta_k) -> IterationState:
    """Closed-form maximizer of the A3C-style objective: ``pi ∝ exp(eta_k A^{pi_k})``, no baseline tilt.

    No convergence guarantee is known for this iteration; it is exposed for comparison.
    """
    ev = evaluate_policy_regularized(mdp, state.policy, state.policy, math.inf)
    return _advance(state, _normalize_rows(eta_k * ev.advantage), ev.value, eta_k)


def da_rv_step(mdp: FiniteMdp, state: IterationState, eta_k, cfg: SolverConfig | None = None,
               method: str = "vi") -> IterationState:
    """Dual Averaging with the conditional entropy: full regularized solve at rate ``eta_k``.

    R_C differs from D_C to the uniform policy by the constant ``log |A|``, so
    the uniform-baseline regularized control problem has the same maximizer.
    """
    uniform = uniform_policy(mdp.num_states, mdp.num_actions)
    report = solve_regularized(mdp, uniform, eta_k, cfg, state.value, method)
    return _advance(state, report.policy, report.value, eta_k)


def apply_step(mdp: FiniteMdp, spec: AlgorithmSpec, state: IterationState) -> IterationState:
    eta_k = spec.eta_at(state.k + 1)
    family = spec.family
    ref = spec.solver.ref_state
    if family is Family.MD:
        return md_exact_step_conditional(mdp, state, eta_k, spec.solver, spec.exact_method)
    if family is Family.REPS:
        return reps_step(mdp, state, eta_k, spec.dual)
    if family is Family.DPP:
        return dpp_step(mdp, state, eta_k, ref)
    if family is Family.TRPO:
        return trpo_exact_step(mdp, state, eta_k)
    if family is Family.MODREGPI:
        return mod_reg_pi_step(mdp, state, eta_k, spec.m, ref)
    if family is Family.DA:
        return da_step(mdp, state, eta_k)
    if family is Family.DARV:
        return da_rv_step(mdp, state, eta_k, spec.solver, spec.exact_method)
    return regvi_step(mdp, state, eta_k, ref)


def _record_gain(mdp, state):
    try:
        gain = policy_gain(mdp, state.policy)
    except SingularChain:
        gain = math.nan
    return replace(state, gain_history=state.gain_history + (gain,))


@dataclass
class OptimizerRun:
    spec: AlgorithmSpec
    states: list
    error: Exception | None = None

    @property
    def gains(self) -> list:
        return list(self.states[-1].gain_history)

    @property
    def final(self) -> IterationState:
        return self.states[-1]


def run_optimizer(mdp: FiniteMdp, spec: AlgorithmSpec, pi_init=None, num_iters: int = 100) -> OptimizerRun:
    """Apply ``num_iters`` steps, recording the gain of every iterate on ``mdp``.

    A failing step ends the run; the trace so far is returned with the error.
    """
    state = _record_gain(mdp, IterationState.initial(mdp, pi_init))
    states = [state]
    for _ in range(num_iters):
        try:
            state = _record_gain(mdp, apply_step(mdp, spec, state))
        except RegMdpError as exc:
            return OptimizerRun(spec, states, exc)
        states.append(state)
    return OptimizerRun(spec, states)


TRACE_COLUMNS = ("algorithm", "eta", "k", "eta_k", "gain", "residual")


def _fmt(x) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def write_trace_csv(run: OptimizerRun, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for state in run.states:
        writer.writerow([run.spec.label, _fmt(run.spec.eta), state.k, _fmt(state.eta_k),
                         _fmt(state.gain), _fmt(state.residual)])
