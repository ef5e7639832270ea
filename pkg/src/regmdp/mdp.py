"""Finite MDPs, stationary distributions and the brute-force optimality oracle."""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import CapExceeded, InvalidMdp, SingularChain

ROW_SUM_TOL = 1e-12
RANK_TOL = 1e-9
DEFAULT_ENUMERATION_CAP = 10**6


def _frozen(array):
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class FiniteMdp:
    """Tabular MDP with kernel ``transition[x, a, y] = P(y|x,a)`` and reward ``reward[x, a]``.

    The constructor only checks shapes; use :func:`validate_mdp` (or the JSON
    loader, which enforces it) for the probability invariants.
    """

    transition: np.ndarray
    reward: np.ndarray

    def __post_init__(self):
        transition = _frozen(self.transition)
        reward = _frozen(self.reward)
        if transition.ndim != 3 or transition.shape[0] != transition.shape[2]:
            raise ValueError(f"transition must have shape (X, A, X), got {transition.shape}")
        if reward.shape != transition.shape[:2]:
            raise ValueError(f"reward shape {reward.shape} does not match transition {transition.shape}")
        if transition.shape[0] == 0 or transition.shape[1] == 0:
            raise ValueError("an MDP needs at least one state and one action")
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "reward", reward)

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    def to_dict(self) -> dict:
        return {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "transition": self.transition.tolist(),
            "reward": self.reward.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FiniteMdp":
        mdp = cls(np.asarray(data["transition"], dtype=float), np.asarray(data["reward"], dtype=float))
        if (mdp.num_states, mdp.num_actions) != (data["num_states"], data["num_actions"]):
            raise InvalidMdp([
                f"declared size ({data['num_states']}, {data['num_actions']}) "
                f"does not match arrays ({mdp.num_states}, {mdp.num_actions})"
            ])
        violations = validate_mdp(mdp)
        if violations:
            raise InvalidMdp(violations)
        return mdp


@dataclass(frozen=True)
class GainEstimate:
    """Average reward ``rho`` and, when a regularizer is involved, ``regularized``."""

    rho: float
    regularized: float | None = None

    @property
    def value(self) -> float:
        return self.rho if self.regularized is None else self.regularized


@dataclass(frozen=True, eq=False)
class OccupancyMeasure:
    """Joint state-action distribution ``mu[x, a]``."""

    mu: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu", _frozen(self.mu))

    @property
    def state_marginal(self) -> np.ndarray:
        return self.mu.sum(axis=1)

    def policy(self, fallback=None) -> np.ndarray:
        """Conditional policy ``mu(x,a) / nu(x)``.

        Rows of states with zero mass are taken from ``fallback`` (uniform by default).
        """
        nu = self.state_marginal
        num_actions = self.mu.shape[1]
        if fallback is None:
            fallback = np.full(self.mu.shape, 1.0 / num_actions)
        out = np.array(fallback, dtype=float, copy=True)
        positive = nu > 0
        out[positive] = self.mu[positive] / nu[positive, None]
        return out

    def flow_residual(self, mdp: FiniteMdp) -> np.ndarray:
        """Per-state violation of the stationarity (flow) constraints."""
        inflow = np.einsum("xa,xay->y", self.mu, mdp.transition)
        return self.state_marginal - inflow


def validate_mdp(mdp: FiniteMdp) -> list[str]:
    violations = []
    P, r = mdp.transition, mdp.reward
    for x, a in itertools.product(range(mdp.num_states), range(mdp.num_actions)):
        row = P[x, a]
        if not np.all(np.isfinite(row)):
            violations.append(f"(x={x}, a={a}): non-finite transition probability")
            continue
        for y in np.flatnonzero(row < 0):
            violations.append(f"(x={x}, a={a}): negative probability P({y}|{x},{a}) = {row[y]!r}")
        total = row.sum()
        if abs(total - 1.0) > ROW_SUM_TOL:
            violations.append(f"(x={x}, a={a}): transition row sums to {total!r}, expected 1")
        if not np.isfinite(r[x, a]):
            violations.append(f"(x={x}, a={a}): non-finite reward {r[x, a]!r}")
    return violations


def uniform_chain_is_irreducible(mdp: FiniteMdp) -> bool:
    chain = mdp.transition.mean(axis=1)
    n_components, _ = connected_components(chain > 0, directed=True, connection="strong")
    return n_components == 1


def load_mdp(path) -> FiniteMdp:
    """Read an MDP from JSON; raises :class:`InvalidMdp` on invariant violations."""
    with open(path) as fh:
        mdp = FiniteMdp.from_dict(json.load(fh))
    if not uniform_chain_is_irreducible(mdp):
        warnings.warn(f"{path}: the uniform-policy chain is not irreducible; "
                      "solvers assume the MDP is unichain", stacklevel=2)
    return mdp


def save_mdp(mdp: FiniteMdp, path) -> None:
    Path(path).write_text(json.dumps(mdp.to_dict()))


def random_mdp(num_states: int, num_actions: int, seed, reward_scale: float = 1.0) -> FiniteMdp:
    """Dense random MDP; every kernel row is strictly positive, hence unichain and aperiodic."""
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(num_states), size=(num_states, num_actions))
    P /= P.sum(axis=2, keepdims=True)
    r = reward_scale * rng.uniform(-1.0, 1.0, size=(num_states, num_actions))
    return FiniteMdp(P, r)


def uniform_policy(num_states: int, num_actions: int) -> np.ndarray:
    return np.full((num_states, num_actions), 1.0 / num_actions)


def deterministic_policy(actions, num_actions: int) -> np.ndarray:
    actions = np.asarray(actions, dtype=int)
    policy = np.zeros((len(actions), num_actions))
    policy[np.arange(len(actions)), actions] = 1.0
    return policy


def check_policy(policy, mdp: FiniteMdp | None = None, tol: float = ROW_SUM_TOL) -> np.ndarray:
    policy = np.asarray(policy, dtype=float)
    if mdp is not None and policy.shape != (mdp.num_states, mdp.num_actions):
        raise ValueError(f"policy shape {policy.shape} does not match MDP {mdp.reward.shape}")
    if np.any(policy < 0) or np.any(np.abs(policy.sum(axis=1) - 1.0) > tol):
        raise ValueError("policy rows must be probability distributions")
    return policy


def induced_chain(mdp: FiniteMdp, policy) -> np.ndarray:
    """State transition matrix ``P_pi[x, y]`` of the chain induced by ``policy``."""
    return np.einsum("xa,xay->xy", policy, mdp.transition)


def stationary_state_distribution(chain: np.ndarray) -> np.ndarray:
    n = chain.shape[0]
    system = chain.T - np.eye(n)
    system[-1, :] = 1.0
    smallest_sv = np.linalg.svd(system, compute_uv=False)[-1]
    if smallest_sv < RANK_TOL:
        raise SingularChain(f"stationary system is rank deficient (smallest singular value {smallest_sv:.3g}); "
                            "the chain does not have a unique stationary distribution")
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    nu = np.linalg.solve(system, rhs)
    # clip round-off negatives before renormalizing
    nu = np.where(nu < 0, 0.0, nu)
    return nu / nu.sum()


def stationary_distribution(mdp: FiniteMdp, policy) -> OccupancyMeasure:
    policy = np.asarray(policy, dtype=float)
    nu = stationary_state_distribution(induced_chain(mdp, policy))
    return OccupancyMeasure(nu[:, None] * policy)


def average_reward(mdp: FiniteMdp, mu) -> GainEstimate:
    mu = mu.mu if isinstance(mu, OccupancyMeasure) else np.asarray(mu, dtype=float)
    return GainEstimate(float(np.sum(mu * mdp.reward)))


def policy_gain(mdp: FiniteMdp, policy) -> float:
    return average_reward(mdp, stationary_distribution(mdp, policy)).rho


def brute_force_optimal(mdp: FiniteMdp, cap: int = DEFAULT_ENUMERATION_CAP) -> tuple[np.ndarray, GainEstimate]:
    """Best deterministic policy by exhaustive enumeration.

    Ties go to the lexicographically smallest action tuple (enumeration order).
    """
    count = mdp.num_actions ** mdp.num_states
    if count > cap:
        raise CapExceeded(f"{mdp.num_actions}^{mdp.num_states} = {count} policies exceeds the cap {cap}")
    best_actions, best_rho = None, -np.inf
    for actions in itertools.product(range(mdp.num_actions), repeat=mdp.num_states):
        policy = deterministic_policy(actions, mdp.num_actions)
        rho = policy_gain(mdp, policy)
        if rho > best_rho:
            best_actions, best_rho = actions, rho
    return deterministic_policy(best_actions, mdp.num_actions), GainEstimate(best_rho)
