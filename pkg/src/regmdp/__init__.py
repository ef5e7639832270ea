"""Entropy-regularized average-reward MDPs: exact solvers, policy optimizers and a gridworld learning harness."""

from .bellman import (
    SolveReport,
    SolverConfig,
    evaluate_policy_regularized,
    regularized_policy_iteration,
    regularized_value_iteration,
)
from .errors import (
    CapExceeded,
    DomainError,
    DualNotConverged,
    InvalidGrid,
    InvalidMdp,
    NoConvergence,
    RegMdpError,
    SingularChain,
    SupportViolation,
)
from .mdp import FiniteMdp, GainEstimate, OccupancyMeasure, brute_force_optimal, random_mdp, stationary_distribution
from .optimizers import AlgorithmSpec, run_optimizer

__version__ = "0.1.0"

__all__ = [
    "AlgorithmSpec", "CapExceeded", "DomainError", "DualNotConverged", "FiniteMdp", "GainEstimate",
    "InvalidGrid", "InvalidMdp", "NoConvergence", "OccupancyMeasure", "RegMdpError", "SingularChain",
    "SolveReport", "SolverConfig", "SupportViolation", "brute_force_optimal", "evaluate_policy_regularized",
    "random_mdp", "regularized_policy_iteration", "regularized_value_iteration", "run_optimizer",
    "stationary_distribution",
]
