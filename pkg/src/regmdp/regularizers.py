"""Entropy regularizers, their Bregman divergences and the regularized gain."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SupportViolation
from .mdp import FiniteMdp, GainEstimate, OccupancyMeasure, average_reward

# entries below this are exact zeros for the 0 log 0 convention
ZERO_MASS = 1e-300


class RegularizerKind(enum.Enum):
    RELATIVE_ENTROPY = "relative_entropy"  # D_S(mu || mu'), baseline measure
    CONDITIONAL_ENTROPY = "conditional_entropy"  # D_C(mu || mu'), baseline policy
    NEG_SHANNON_ENTROPY = "neg_shannon_entropy"  # R_S
    NEG_CONDITIONAL_ENTROPY = "neg_conditional_entropy"  # R_C


@dataclass(frozen=True, eq=False)
class RegularizerSpec:
    kind: RegularizerKind
    eta: float = 1.0
    baseline: np.ndarray | None = None

    def __post_init__(self):
        kind = RegularizerKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if not self.eta > 0:
            raise ValueError(f"eta must be positive or inf, got {self.eta}")
        baseline = self.baseline
        if isinstance(baseline, OccupancyMeasure):
            baseline = baseline.policy() if kind is RegularizerKind.CONDITIONAL_ENTROPY else baseline.mu
        if kind in (RegularizerKind.RELATIVE_ENTROPY, RegularizerKind.CONDITIONAL_ENTROPY):
            if baseline is None:
                raise ValueError(f"{kind.value} needs a baseline")
            baseline = np.array(baseline, dtype=float)
            baseline.setflags(write=False)
        elif baseline is not None:
            raise ValueError(f"{kind.value} takes no baseline")
        object.__setattr__(self, "baseline", baseline)

    @classmethod
    def conditional(cls, pi_ref, eta=1.0):
        return cls(RegularizerKind.CONDITIONAL_ENTROPY, eta, pi_ref)

    @classmethod
    def relative(cls, mu_ref, eta=1.0):
        return cls(RegularizerKind.RELATIVE_ENTROPY, eta, mu_ref)


def _as_array(mu):
    return mu.mu if isinstance(mu, OccupancyMeasure) else np.asarray(mu, dtype=float)


def _xlogy_ratio(weights, numer, denom, what):
    """sum of w * log(numer / denom) with 0 log 0 := 0; mass on a zero denominator is an error."""
    live = weights > ZERO_MASS
    bad = live & ~(denom > ZERO_MASS)
    if np.any(bad):
        index = tuple(int(i) for i in np.argwhere(bad)[0])
        raise SupportViolation(f"{what}: mass at (x, a) = {index} where the baseline has none", index)
    return float(np.sum(weights[live] * np.log(numer[live] / denom[live])))


def conditional_policy(mu: np.ndarray) -> np.ndarray:
    """pi_mu with zero rows left at zero (they only ever meet zero weights)."""
    nu = mu.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(nu > ZERO_MASS, mu / np.where(nu > 0, nu, 1.0), 0.0)


def neg_shannon_entropy(mu) -> float:
    mu = _as_array(mu)
    live = mu > ZERO_MASS
    return float(np.sum(mu[live] * np.log(mu[live])))


def neg_conditional_entropy(mu) -> float:
    mu = _as_array(mu)
    return _xlogy_ratio(mu, mu, np.broadcast_to(mu.sum(axis=1, keepdims=True), mu.shape), "R_C")


def relative_entropy(mu, mu_ref) -> float:
    """D_S(mu || mu_ref)."""
    mu, mu_ref = _as_array(mu), _as_array(mu_ref)
    return _xlogy_ratio(mu, mu, mu_ref, "D_S")


def conditional_relative_entropy(mu, pi_ref) -> float:
    """D_C(mu || mu') given the baseline's conditional policy ``pi_ref``."""
    mu = _as_array(mu)
    return _xlogy_ratio(mu, conditional_policy(mu), np.asarray(pi_ref, dtype=float), "D_C")


def eval_regularizer(spec: RegularizerSpec, mu) -> float:
    kind = spec.kind
    if kind is RegularizerKind.NEG_SHANNON_ENTROPY:
        return neg_shannon_entropy(mu)
    if kind is RegularizerKind.NEG_CONDITIONAL_ENTROPY:
        return neg_conditional_entropy(mu)
    if kind is RegularizerKind.RELATIVE_ENTROPY:
        return relative_entropy(mu, spec.baseline)
    return conditional_relative_entropy(mu, spec.baseline)


def regularizer_gradient(spec: RegularizerSpec, mu) -> np.ndarray:
    """Partial derivatives of the regularizer with respect to each ``mu(x, a)``."""
    mu = _as_array(mu)
    if np.any(mu <= 0):
        index = tuple(int(i) for i in np.argwhere(mu <= 0)[0])
        raise DomainError(f"gradient undefined at mu{index} = 0")
    log_pi = np.log(mu) - np.log(mu.sum(axis=1, keepdims=True))
    kind = spec.kind
    if kind is RegularizerKind.NEG_SHANNON_ENTROPY:
        return np.log(mu) + 1.0
    if kind is RegularizerKind.NEG_CONDITIONAL_ENTROPY:
        return log_pi
    if kind is RegularizerKind.RELATIVE_ENTROPY:
        with np.errstate(divide="ignore"):
            return np.log(mu) - np.log(spec.baseline) + 1.0
    with np.errstate(divide="ignore"):
        return log_pi - np.log(spec.baseline)


def bregman_identity_residual(spec: RegularizerSpec, mu, mu_prime) -> float:
    """Gap between the closed-form divergence and the Bregman construction.

    Conditional kinds compare D_C against R_C; Shannon kinds compare D_S against R_S.
    """
    mu, mu_prime = _as_array(mu), _as_array(mu_prime)
    if spec.kind in (RegularizerKind.CONDITIONAL_ENTROPY, RegularizerKind.NEG_CONDITIONAL_ENTROPY):
        base = RegularizerSpec(RegularizerKind.NEG_CONDITIONAL_ENTROPY)
        divergence = conditional_relative_entropy(mu, conditional_policy(mu_prime))
    else:
        base = RegularizerSpec(RegularizerKind.NEG_SHANNON_ENTROPY)
        divergence = relative_entropy(mu, mu_prime)
    bregman = (eval_regularizer(base, mu) - eval_regularizer(base, mu_prime)
               - float(np.sum(regularizer_gradient(base, mu_prime) * (mu - mu_prime))))
    return abs(divergence - bregman)


def regularized_objective(mdp: FiniteMdp, spec: RegularizerSpec, mu) -> GainEstimate:
    rho = average_reward(mdp, _as_array(mu)).rho
    if math.isinf(spec.eta):
        return GainEstimate(rho, rho)
    return GainEstimate(rho, rho - eval_regularizer(spec, mu) / spec.eta)
