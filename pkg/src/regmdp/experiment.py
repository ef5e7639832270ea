"""Model-based learning loop and learning-rate sweeps.

Each iteration executes the current policy on the true MDP for ``S`` steps,
re-estimates the transition kernel by maximum likelihood (rewards are taken as
known), and applies one optimizer step on the estimated model.
"""

from __future__ import annotations

import csv
import json
from bisect import bisect_right
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .bellman import SolverConfig
from .errors import RegMdpError
from .mdp import FiniteMdp, policy_gain, uniform_policy
from .optimizers import AlgorithmSpec, Family, IterationState, apply_step

# looser than the exact-solve default: the model changes every iteration anyway
LEARNING_SOLVER = SolverConfig(tol=1e-8, max_iters=20_000, record_trace=False)


@dataclass(frozen=True)
class ExperimentConfig:
    N: int = 500
    S: int = 500
    eta: float = 0.1
    algorithm: str = "dpp"
    schedule: str | None = None
    seed: int = 0
    runs: int = 20
    oracle_model: bool = False
    reset: bool = False

    def __post_init__(self):
        if self.N < 0 or self.S < 1 or self.runs < 1:
            raise ValueError("N must be >= 0, S and runs must be positive")
        if not self.eta > 0:
            raise ValueError("eta must be positive")

    def spec(self) -> AlgorithmSpec:
        return AlgorithmSpec.parse(self.algorithm, self.eta, self.schedule, solver=LEARNING_SOLVER,
                                   exact_method="pi")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        fields = {k: data[k] for k in cls.__dataclass_fields__ if k in data}
        return cls(**fields)


def load_config(path) -> tuple[ExperimentConfig, dict]:
    """Experiment config from JSON; keys that are not config fields (e.g. sweep grids) are returned separately."""
    with open(path) as fh:
        data = json.load(fh)
    extra = {k: v for k, v in data.items() if k not in ExperimentConfig.__dataclass_fields__}
    return ExperimentConfig.from_dict(data), extra


@dataclass
class CountModel:
    counts: np.ndarray  # N(x, a, y)
    reward: np.ndarray

    @classmethod
    def empty(cls, mdp: FiniteMdp) -> "CountModel":
        return cls(np.zeros(mdp.transition.shape, dtype=np.int64), mdp.reward)


def ml_estimate(model: CountModel) -> FiniteMdp:
    """Maximum-likelihood kernel; unvisited state-action pairs self-loop."""
    counts = model.counts
    totals = counts.sum(axis=2)
    P = np.zeros(counts.shape)
    seen = totals > 0
    P[seen] = counts[seen] / totals[seen][:, None]
    xs, as_ = np.nonzero(~seen)
    P[xs, as_, xs] = 1.0
    return FiniteMdp(P, model.reward)


class TransitionSampler:
    """Simulates a FiniteMdp step by step from sparse cumulative tables."""

    def __init__(self, mdp: FiniteMdp):
        self.successors = []
        for x in range(mdp.num_states):
            row = []
            for a in range(mdp.num_actions):
                ys = np.flatnonzero(mdp.transition[x, a] > 0)
                cdf = np.cumsum(mdp.transition[x, a, ys])
                row.append((ys.tolist(), cdf.tolist()))
            self.successors.append(row)

    def rollout(self, policy, x: int, uniforms) -> tuple[list, int]:
        """Returns the visited ``(x, a, y)`` triples and the final state."""
        policy_cdf = np.cumsum(policy, axis=1).tolist()
        successors = self.successors
        out = []
        it = iter(uniforms)
        for u_action, u_next in zip(it, it):
            cdf = policy_cdf[x]
            a = min(bisect_right(cdf, u_action * cdf[-1]), len(cdf) - 1)
            ys, ycdf = successors[x][a]
            y = ys[min(bisect_right(ycdf, u_next * ycdf[-1]), len(ys) - 1)]
            out.append((x, a, y))
            x = y
        return out, x


def run_rng(seed: int, run: int) -> np.random.Generator:
    """Independent generator for repetition ``run``; shared by every algorithm and eta."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(run,)))


@dataclass
class ExperimentReport:
    algorithm: str
    eta: float
    seed: int
    run: int
    gains: list  # true gain of pi_0 .. pi_N
    final_policy: np.ndarray
    errors: list = field(default_factory=list)  # (iteration, message)

    @property
    def final_gain(self) -> float:
        return self.gains[-1]

    @property
    def mean_iter_gain(self) -> float:
        return float(np.mean(self.gains))


def _start_states(mdp):
    starts = getattr(mdp, "starts", ())
    return list(starts) if starts else [0]


def _visited(counts, current):
    visited = counts.sum(axis=(1, 2)) > 0
    visited[current] = True
    return np.flatnonzero(visited)


def _restrict(mdp: FiniteMdp, idx) -> FiniteMdp:
    return FiniteMdp(mdp.transition[np.ix_(idx, np.arange(mdp.num_actions), idx)], mdp.reward[idx])


def run_learning_experiment(true_mdp: FiniteMdp, cfg: ExperimentConfig, run: int = 0) -> ExperimentReport:
    """One learning run; deterministic given ``cfg.seed`` and ``run``.

    Steps are applied to the estimated model restricted to the states seen so
    far (a closed set under the estimate, since unvisited pairs self-loop);
    unseen states keep their current policy.  With ``oracle_model`` the true
    MDP replaces the estimate and no sampling happens.
    """
    spec = cfg.spec()
    rng = run_rng(cfg.seed, run)
    starts = _start_states(true_mdp)
    sampler = None if cfg.oracle_model else TransitionSampler(true_mdp)
    model = CountModel.empty(true_mdp)
    n = true_mdp.num_states
    state = IterationState.initial(true_mdp)
    x = starts[int(rng.integers(len(starts)))]
    gains = [policy_gain(true_mdp, state.policy)]
    errors = []
    for k in range(cfg.N):
        if cfg.oracle_model:
            estimate, idx = true_mdp, np.arange(n)
        else:
            if cfg.reset:
                x = starts[int(rng.integers(len(starts)))]
            triples, x = sampler.rollout(state.policy, x, rng.random(2 * cfg.S))
            np.add.at(model.counts, tuple(np.array(triples).T), 1)
            idx = _visited(model.counts, x)
            estimate = _restrict(ml_estimate(model), idx)
        local = replace(state, policy=state.policy[idx], value=state.value[idx], measure=None)
        try:
            stepped = apply_step(estimate, spec, local)
        except RegMdpError as exc:
            errors.append((k, f"{type(exc).__name__}: {exc}"))
            state = replace(state, k=state.k + 1)
        else:
            policy, value = state.policy.copy(), state.value.copy()
            policy[idx], value[idx] = stepped.policy, stepped.value
            state = replace(stepped, policy=policy, value=value, measure=None)
        gains.append(policy_gain(true_mdp, state.policy))
    return ExperimentReport(spec.label, cfg.eta, cfg.seed, run, gains, state.policy, errors)


@dataclass
class SweepReport:
    runs: list  # ExperimentReport, ordered by (algorithm, eta, run)
    failures: list = field(default_factory=list)  # (algorithm, eta, run, message)

    def summary(self) -> list[dict]:
        cells = {}
        for rep in self.runs:
            cells.setdefault((rep.algorithm, rep.eta), []).append(rep.final_gain)
        out = []
        for (algorithm, eta), finals in cells.items():
            finals = np.asarray(finals)
            out.append({"algorithm": algorithm, "eta": eta, "mean": float(finals.mean()),
                        "std": float(finals.std()), "min": float(finals.min()), "max": float(finals.max())})
        return out

    def mean_table(self) -> dict:
        return {(row["algorithm"], row["eta"]): row["mean"] for row in self.summary()}

    def write_runs_csv(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("algorithm", "eta", "run", "seed", "final_gain", "mean_iter_gain"))
        for rep in self.runs:
            writer.writerow((rep.algorithm, repr(float(rep.eta)), rep.run, rep.seed,
                             repr(rep.final_gain), repr(rep.mean_iter_gain)))

    def write_summary_csv(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("algorithm", "eta", "mean", "std", "min", "max"))
        for row in self.summary():
            writer.writerow((row["algorithm"], repr(float(row["eta"])),
                             *(repr(row[key]) for key in ("mean", "std", "min", "max"))))


def _run_cell(args):
    true_mdp, cfg, run = args
    try:
        return run_learning_experiment(true_mdp, cfg, run), None
    except Exception as exc:  # noqa: BLE001 - one failed cell must not stop the sweep
        return None, (cfg.algorithm, cfg.eta, run, f"{type(exc).__name__}: {exc}")


def sweep_eta(true_mdp: FiniteMdp, base_cfg: ExperimentConfig, eta_grid, algorithms, jobs: int = 1,
              include_regvi: bool = True) -> SweepReport:
    """Repeated learning runs for every (algorithm, eta) cell.

    The fixed-baseline RegVI comparator is added unless already listed.
    Repetition ``r`` uses the same random stream in every cell.
    """
    eta_grid = [float(e) for e in eta_grid]
    algorithms = list(algorithms)
    if not eta_grid or not algorithms:
        raise ValueError("eta grid and algorithm list must be non-empty")
    if include_regvi and Family.REGVI.value not in algorithms:
        algorithms.append(Family.REGVI.value)
    tasks = [(true_mdp, replace(base_cfg, algorithm=algo, eta=eta), run)
             for algo in algorithms for eta in eta_grid for run in range(base_cfg.runs)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, tasks, chunksize=1))
    else:
        results = [_run_cell(task) for task in tasks]
    report = SweepReport([rep for rep, _ in results if rep is not None],
                         [fail for _, fail in results if fail is not None])
    return report


def write_gains_csv(report: ExperimentReport, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(("algorithm", "eta", "run", "seed", "k", "gain"))
    for k, gain in enumerate(report.gains):
        writer.writerow((report.algorithm, repr(float(report.eta)), report.run, report.seed, k, repr(gain)))


def exact_model_fixed_point(true_mdp: FiniteMdp, cfg: ExperimentConfig) -> float:
    """Gain reached by the same optimizer run for ``cfg.N`` steps on the true model."""
    from .optimizers import run_optimizer

    return run_optimizer(true_mdp, cfg.spec(), uniform_policy(true_mdp.num_states, true_mdp.num_actions), cfg.N).gains[-1]
