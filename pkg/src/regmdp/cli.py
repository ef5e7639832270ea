"""Command-line front end.

Subcommands write JSON or CSV artifacts into an output directory (``--out``
or ``--out-dir``, defaulting to ``$REGMDP_OUT_DIR`` and then ``.``).  Exit
codes: 0 on success, 1 on input errors, 2 when a solver does not converge or
a run fails midway.

MDP arguments accept a JSON file written by :func:`regmdp.mdp.save_mdp`, a
grid text file (``.txt``), ``default-grid``, or ``random:XxA`` which draws a
seeded random MDP with X states and A actions (``--seed``).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bellman import SolverConfig, regularized_policy_iteration, regularized_value_iteration
from .errors import InvalidGrid, InvalidMdp, NoConvergence, RegMdpError
from .experiment import ExperimentConfig, load_config, run_learning_experiment, sweep_eta, write_gains_csv
from .gridworld import build_gridworld, default_grid, load_grid
from .mdp import FiniteMdp, brute_force_optimal, check_policy, load_mdp, random_mdp, uniform_policy, validate_mdp
from .optimizers import AlgorithmSpec, run_optimizer, write_trace_csv

OUT_DIR_ENV = "REGMDP_OUT_DIR"
DEFAULT_SWEEP_ETAS = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)
DEFAULT_SWEEP_ALGOS = ("dpp", "trpo", "da", "darv")
_RANDOM = re.compile(r"^random:(\d+)x(\d+)$")


class InputError(Exception):
    """Bad flags or unreadable input files; maps to exit code 1."""


def parse_eta(text: str) -> float:
    try:
        eta = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"eta must be a positive number or 'inf', got {text!r}") from None
    if not eta > 0 or math.isnan(eta):
        raise argparse.ArgumentTypeError(f"eta must be a positive number or 'inf', got {text!r}")
    return eta


def _eta_list(text: str) -> list[float]:
    return [parse_eta(part) for part in text.split(",") if part.strip()]


def load_any_mdp(source: str, seed: int = 0) -> FiniteMdp:
    match = _RANDOM.match(source)
    if match:
        return random_mdp(int(match.group(1)), int(match.group(2)), seed)
    if source == "default-grid":
        return build_gridworld(default_grid())
    path = Path(source)
    if not path.is_file():
        raise InputError(f"no such file: {source}")
    try:
        if path.suffix == ".txt":
            return build_gridworld(load_grid(path))
        return load_mdp(path)
    except (InvalidMdp, InvalidGrid) as exc:
        raise InputError(f"{source}: {exc}") from exc
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{source}: cannot read MDP ({type(exc).__name__}: {exc})") from exc


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_DIR_ENV) or ".").resolve()
    out.mkdir(parents=True, exist_ok=True)
    return out


def _baseline(args, mdp: FiniteMdp) -> np.ndarray:
    if args.baseline == "uniform":
        return uniform_policy(mdp.num_states, mdp.num_actions)
    try:
        with open(args.baseline) as fh:
            return check_policy(json.load(fh), mdp)
    except (OSError, ValueError) as exc:
        raise InputError(f"baseline {args.baseline}: {exc}") from exc


def cmd_solve(args) -> int:
    mdp = load_any_mdp(args.mdp, args.seed)
    pi_ref = _baseline(args, mdp)
    cfg = SolverConfig(tol=args.tol, max_iters=args.max_iters)
    out = _out_dir(args) / "solve.json"
    try:
        if args.method == "vi":
            report = regularized_value_iteration(mdp, pi_ref, args.eta, cfg)
        elif args.method == "pi":
            report = regularized_policy_iteration(mdp, pi_ref, args.eta, cfg)
        else:
            report = regularized_policy_iteration(mdp, pi_ref, args.eta, cfg, inner_steps=args.m)
    except NoConvergence as exc:
        out.write_text(exc.report.to_json() + "\n")
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out.write_text(report.to_json() + "\n")
    print(f"gain {report.gain.rho!r} regularized {report.gain.regularized!r} iterations {report.iterations}")
    return 0


def cmd_optimize(args) -> int:
    mdp = load_any_mdp(args.mdp, args.seed)
    try:
        spec = AlgorithmSpec.parse(args.algo, args.eta, args.schedule)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    run = run_optimizer(mdp, spec, num_iters=args.iters)
    out = _out_dir(args) / "trace.csv"
    with open(out, "w", newline="") as fh:
        write_trace_csv(run, fh)
    if run.error is not None:
        print(f"error: step {run.final.k + 1} failed: {type(run.error).__name__}: {run.error}", file=sys.stderr)
        return 2
    print(f"{spec.label} final gain {run.gains[-1]!r}")
    return 0


def _experiment_inputs(args):
    mdp = load_any_mdp(args.mdp, args.seed if args.seed is not None else 0)
    extra = {}
    if args.config:
        try:
            cfg, extra = load_config(args.config)
        except (OSError, ValueError, TypeError) as exc:
            raise InputError(f"config {args.config}: {exc}") from exc
    else:
        cfg = ExperimentConfig()
    overrides = {key: getattr(args, key) for key in ("N", "S", "runs", "seed", "algorithm", "eta")
                 if getattr(args, key, None) is not None}
    try:
        cfg = replace(cfg, **overrides)
        cfg.spec()
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    return mdp, cfg, extra


def cmd_learn(args) -> int:
    mdp, cfg, _ = _experiment_inputs(args)
    out = _out_dir(args)
    reports, failures = [], 0
    for run in range(cfg.runs):
        try:
            rep = run_learning_experiment(mdp, cfg, run)
        except RegMdpError as exc:
            print(f"error: run {run}: {type(exc).__name__}: {exc}", file=sys.stderr)
            failures += 1
            continue
        reports.append(rep)
        with open(out / f"gains_run{run:03d}.csv", "w", newline="") as fh:
            write_gains_csv(rep, fh)
    if not reports:
        return 2
    finals = [rep.final_gain for rep in reports]
    print(f"{cfg.algorithm} eta={cfg.eta!r} runs={len(reports)} mean final gain {float(np.mean(finals))!r}")
    return 0


def cmd_sweep(args) -> int:
    mdp, cfg, extra = _experiment_inputs(args)
    etas = args.etas if args.etas is not None else [float(e) for e in extra.get("eta_grid", DEFAULT_SWEEP_ETAS)]
    algos = args.algos.split(",") if args.algos else list(extra.get("algorithms", DEFAULT_SWEEP_ALGOS))
    try:
        for algo in algos:
            AlgorithmSpec.parse(algo, 1.0)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    report = sweep_eta(mdp, cfg, etas, algos, jobs=args.jobs)
    out = _out_dir(args)
    with open(out / "sweep_runs.csv", "w", newline="") as fh:
        report.write_runs_csv(fh)
    with open(out / "sweep_summary.csv", "w", newline="") as fh:
        report.write_summary_csv(fh)
    for fail in report.failures:
        print("error: cell {} eta={} run {}: {}".format(*fail), file=sys.stderr)
    for row in report.summary():
        print(f"{row['algorithm']:>12} eta={row['eta']:<8g} mean={row['mean']:.4f} std={row['std']:.4f}")
    return 2 if not report.runs else 0


def cmd_validate(args) -> int:
    source = args.mdp
    if source.endswith(".txt"):
        try:
            mdp = build_gridworld(load_grid(source))
        except (OSError, InvalidGrid) as exc:
            print(f"invalid: {exc}", file=sys.stderr)
            return 1
        problems = validate_mdp(mdp)
    else:
        try:
            with open(source) as fh:
                data = json.load(fh)
            problems = validate_mdp(FiniteMdp.from_dict(data))
        except InvalidMdp as exc:
            problems = list(exc.violations)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            problems = [f"{type(exc).__name__}: {exc}"]
    for problem in problems:
        print(f"invalid: {problem}", file=sys.stderr)
    if problems:
        return 1
    print("ok")
    return 0


def cmd_oracle(args) -> int:
    mdp = load_any_mdp(args.mdp, args.seed)
    try:
        policy, gain = brute_force_optimal(mdp, cap=args.cap)
    except RegMdpError as exc:
        raise InputError(str(exc)) from exc
    payload = {"gain": gain.rho, "actions": [int(a) for a in policy.argmax(axis=1)]}
    (_out_dir(args) / "oracle.json").write_text(json.dumps(payload, indent=2) + "\n")
    print(f"optimal gain {gain.rho!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="regmdp", description="Entropy-regularized average-reward MDP toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed_default=0):
        p.add_argument("mdp", help="MDP JSON, grid .txt, default-grid or random:XxA")
        p.add_argument("--seed", type=int, default=seed_default)
        p.add_argument("--out", "--out-dir", dest="out", default=None,
                       help=f"output directory (default ${OUT_DIR_ENV} or the working directory)")

    p = sub.add_parser("solve", help="exact regularized solve")
    common(p)
    p.add_argument("--eta", type=parse_eta, default=1.0)
    p.add_argument("--baseline", default="uniform", help="'uniform' or a JSON policy file")
    p.add_argument("--method", choices=("vi", "pi", "pi-m"), default="vi")
    p.add_argument("--m", type=int, default=1, help="inner steps for pi-m")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iters", type=int, default=100_000)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("optimize", help="run a policy optimizer on the exact model")
    common(p)
    p.add_argument("--algo", default="trpo", help="md, reps, dpp, trpo, modregpi:m, da, darv or regvi")
    p.add_argument("--eta", type=parse_eta, default=1.0)
    p.add_argument("--schedule", choices=("const", "linear"), default=None)
    p.add_argument("--iters", type=int, default=100)
    p.set_defaults(func=cmd_optimize)

    for name, func, help_text in (("learn", cmd_learn, "model-based learning runs"),
                                  ("sweep", cmd_sweep, "learning-rate sweep")):
        p = sub.add_parser(name, help=help_text)
        common(p, seed_default=None)
        p.add_argument("--config", help="JSON file mirroring the experiment config fields")
        p.add_argument("--N", type=int)
        p.add_argument("--S", type=int)
        p.add_argument("--runs", type=int)
        if name == "learn":
            p.add_argument("--algo", dest="algorithm")
            p.add_argument("--eta", type=parse_eta)
        else:
            p.add_argument("--algos", help="comma-separated algorithms (RegVI is always added)")
            p.add_argument("--etas", type=_eta_list, help="comma-separated learning rates")
            p.add_argument("--jobs", type=int, default=1)
        p.set_defaults(func=func)

    p = sub.add_parser("validate", help="check an MDP JSON or grid file")
    p.add_argument("mdp")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("oracle", help="optimal gain by enumerating deterministic policies")
    common(p)
    p.add_argument("--cap", type=int, default=10**6)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NoConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RegMdpError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
