"""Tabular softmax policies and the regularized policy gradient."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .bellman import evaluate_policy_regularized
from .mdp import FiniteMdp, GainEstimate
from .errors import RegMdpError


@dataclass(frozen=True, eq=False)
class SoftmaxPolicyParams:
    theta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @property
    def policy(self) -> np.ndarray:
        t = self.theta - self.theta.max(axis=1, keepdims=True)
        w = np.exp(t)
        return w / w.sum(axis=1, keepdims=True)

    @classmethod
    def from_policy(cls, policy) -> "SoftmaxPolicyParams":
        """Logits reproducing a full-support policy."""
        return cls(np.log(np.asarray(policy, dtype=float)))


def regularized_gain(mdp: FiniteMdp, params: SoftmaxPolicyParams, pi_ref, eta) -> GainEstimate:
    return evaluate_policy_regularized(mdp, params.policy, pi_ref, eta).gain


def policy_gradient(mdp: FiniteMdp, params: SoftmaxPolicyParams, pi_ref, eta) -> np.ndarray:
    """Gradient of the regularized gain with respect to the logits.

    Occupancy-weighted score times regularized advantage; for the tabular
    softmax the (x, a) entry is ``nu(x) pi(a|x) (A(x,a) - sum_b pi(b|x) A(x,b))``.
    """
    pi = params.policy
    ev = evaluate_policy_regularized(mdp, pi, pi_ref, eta)
    A = ev.advantage
    centered = A - np.sum(pi * A, axis=1, keepdims=True)
    return ev.measure.mu * centered


def score_function(params: SoftmaxPolicyParams) -> np.ndarray:
    """``score[x, a, b] = d log pi(a|x) / d theta(x, b)``."""
    pi = params.policy
    n_actions = pi.shape[1]
    return np.eye(n_actions)[None, :, :] - pi[:, None, :]


@dataclass
class AscentTrace:
    params: list
    gains: list
    grad_norms: list
    error: Exception | None = None


def gradient_ascent(mdp: FiniteMdp, params0: SoftmaxPolicyParams, pi_ref, eta, step_size: float,
                    num_steps: int) -> AscentTrace:
    """Plain gradient ascent on the logits; stops early on a non-finite gradient."""
    if not step_size > 0:
        raise ValueError("step_size must be positive")
    params = params0
    trace = AscentTrace([params], [regularized_gain(mdp, params, pi_ref, eta).value], [])
    for _ in range(num_steps):
        try:
            grad = policy_gradient(mdp, params, pi_ref, eta)
        except RegMdpError as exc:
            trace.error = exc
            break
        if not np.all(np.isfinite(grad)):
            trace.error = FloatingPointError("non-finite policy gradient")
            break
        trace.grad_norms.append(float(np.max(np.abs(grad))))
        params = SoftmaxPolicyParams(params.theta + step_size * grad)
        trace.params.append(params)
        trace.gains.append(regularized_gain(mdp, params, pi_ref, eta).value)
    return trace


def write_ascent_csv(trace: AscentTrace, fh) -> None:
    """Columns ``step, gain, grad_norm``; the last row has no gradient yet."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(("step", "gain", "grad_norm"))
    for step, gain in enumerate(trace.gains):
        norm = trace.grad_norms[step] if step < len(trace.grad_norms) else None
        writer.writerow((step, repr(float(gain)), "" if norm is None else repr(norm)))
