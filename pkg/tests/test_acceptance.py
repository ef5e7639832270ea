"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py`` or as a script; the
lines appear in the terminal summary.
Criterion 10 runs the full learning-rate sweep and takes the longest; it
uses every available core.
"""

import hashlib
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from regmdp.bellman import (
    SolverConfig,
    bellman_opt_op,
    evaluate_policy_regularized,
    fixpoint_residual,
    greedy_policy,
    performance_difference,
    regularized_value_iteration,
)
from regmdp.cli import DEFAULT_SWEEP_ETAS, main as cli_main
from regmdp.errors import NoConvergence
from regmdp.experiment import ExperimentConfig, sweep_eta
from regmdp.gridworld import build_gridworld, default_grid
from regmdp.mdp import brute_force_optimal, random_mdp, stationary_distribution, uniform_policy
from regmdp.optimizers import AlgorithmSpec, IterationState, dpp_step, minimize_reps_dual, mod_reg_pi_step, run_optimizer
from regmdp.policy_gradient import SoftmaxPolicyParams, policy_gradient, regularized_gain
from regmdp.regularizers import (
    RegularizerKind,
    RegularizerSpec,
    bregman_identity_residual,
    conditional_relative_entropy,
    neg_conditional_entropy,
    regularized_objective,
)

sys.path.insert(0, str(Path(__file__).parent))
from oracles import grid_search_2x2  # noqa: E402

INF = math.inf


# collected here and printed by the terminal-summary hook in conftest.py
RESULT_LINES = []


def report(number, ok, detail):
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULT_LINES.append(line)
    print(line)
    assert ok, line


def random_policy(rng, n, m):
    return rng.dirichlet(np.ones(m), size=n)


def test_criterion_01_unregularized_optimality():
    start = time.perf_counter()
    worst = 0.0
    for seed in range(50):
        n, m = 1 + seed % 4, 1 + (seed // 4) % 3
        mdp = random_mdp(n, m, 1000 + seed)
        solved = regularized_value_iteration(mdp, uniform_policy(n, m), INF)
        worst = max(worst, abs(solved.gain.rho - brute_force_optimal(mdp)[1].rho))
    elapsed = time.perf_counter() - start
    report(1, worst < 1e-8 and elapsed < 5, f"max gain gap {worst:.2e} over 50 MDPs in {elapsed:.2f}s")


def test_criterion_02_strong_duality():
    worst_gap = worst_res = 0.0
    for seed in range(20):
        mdp = random_mdp(2 + seed % 4, 2 + seed % 2, 2000 + seed)
        pi_ref = uniform_policy(mdp.num_states, mdp.num_actions)
        for eta in (0.5, 1.0, 5.0):
            solved = regularized_value_iteration(mdp, pi_ref, eta)
            policy = greedy_policy(mdp, solved.value, pi_ref, eta)
            primal = regularized_objective(mdp, RegularizerSpec.conditional(pi_ref, eta),
                                           stationary_distribution(mdp, policy))
            worst_gap = max(worst_gap, abs(primal.regularized - solved.gain.regularized))
            residual = fixpoint_residual(mdp, solved.value, solved.gain.regularized, pi_ref, eta)
            worst_res = max(worst_res, float(np.max(np.abs(residual))))
    report(2, worst_gap < 1e-7 and worst_res < 1e-8,
           f"max primal-dual gap {worst_gap:.2e}, max fixed-point residual {worst_res:.2e}")


def test_criterion_03_primal_grid_cross_check():
    start = time.perf_counter()
    worst_rel = worst_ent = 0.0
    for seed in range(5):
        mdp = random_mdp(2, 2, 3000 + seed)
        eta = 1.0
        # relative entropy to the stationary measure of a fixed policy, solved through the dual
        mu_ref = stationary_distribution(mdp, np.array([[0.3, 0.7], [0.6, 0.4]])).mu
        _, dual_value, _, _ = minimize_reps_dual(mdp, mu_ref, eta)
        best, _ = grid_search_2x2(mdp, eta, "relative", mu_ref)
        worst_rel = max(worst_rel, abs(best - dual_value))
        # negative conditional entropy: the uniform-baseline optimum shifted by log|A| / eta
        solved = regularized_value_iteration(mdp, uniform_policy(2, 2), eta)
        best, _ = grid_search_2x2(mdp, eta, "entropy")
        worst_ent = max(worst_ent, abs(best - (solved.gain.regularized + math.log(2) / eta)))
    elapsed = time.perf_counter() - start
    report(3, worst_rel < 2e-3 and worst_ent < 2e-3 and elapsed < 60,
           f"grid gap D_S {worst_rel:.2e}, R_C {worst_ent:.2e} in {elapsed:.1f}s")


def test_criterion_04_bregman_certification():
    rng = np.random.default_rng(4)
    spec = RegularizerSpec(RegularizerKind.NEG_CONDITIONAL_ENTROPY)
    worst_id = worst_conv = 0.0
    min_div = INF
    for i in range(200):
        mdp = random_mdp(3 + i % 3, 2 + i % 2, 4000 + i)
        n, m = mdp.num_states, mdp.num_actions
        mu = stationary_distribution(mdp, random_policy(rng, n, m)).mu
        nu = stationary_distribution(mdp, random_policy(rng, n, m)).mu
        worst_id = max(worst_id, bregman_identity_residual(spec, mu, nu))
        min_div = min(min_div, conditional_relative_entropy(mu, nu / nu.sum(axis=1, keepdims=True)))
        gap = neg_conditional_entropy((mu + nu) / 2) - (neg_conditional_entropy(mu) + neg_conditional_entropy(nu)) / 2
        worst_conv = max(worst_conv, gap)
    report(4, worst_id < 1e-10 and min_div >= 0 and worst_conv <= 1e-10,
           f"max identity residual {worst_id:.2e}, min D_C {min_div:.2e}, max midpoint excess {worst_conv:.2e}")


def test_criterion_05_non_expansion():
    rng = np.random.default_rng(5)
    worst = -INF
    for i in range(500):
        mdp = random_mdp(2 + i % 5, 1 + i % 4, 5000 + i)
        n, m = mdp.num_states, mdp.num_actions
        V1, V2 = rng.normal(scale=10, size=n), rng.normal(scale=10, size=n)
        eta = INF if i % 5 == 0 else float(10 ** rng.uniform(-2, 2))
        pi_ref = random_policy(rng, n, m)
        lhs = np.max(np.abs(bellman_opt_op(mdp, V1, pi_ref, eta) - bellman_opt_op(mdp, V2, pi_ref, eta)))
        worst = max(worst, lhs - np.max(np.abs(V1 - V2)))
    report(5, worst <= 1e-12, f"max violation {max(worst, 0.0):.2e} over 500 tuples")


def test_criterion_06_performance_difference():
    rng = np.random.default_rng(6)
    worst = 0.0
    for i in range(100):
        mdp = random_mdp(2 + i % 4, 2 + i % 3, 6000 + i)
        n, m = mdp.num_states, mdp.num_actions
        pi_a, pi_b, pi_ref = (random_policy(rng, n, m) for _ in range(3))
        for eta in (1.0, INF):
            lhs, rhs = performance_difference(mdp, pi_a, pi_b, pi_ref, eta)
            worst = max(worst, abs(lhs - rhs))
    report(6, worst < 1e-9, f"max |lhs - rhs| {worst:.2e} over 100 pairs and eta in {{1, inf}}")


def test_criterion_07_policy_gradient():
    h = 1e-5
    worst_rel = worst_opt = 0.0
    for s in range(5):
        mdp = random_mdp(3, 2, 7000 + s)
        pi_ref = uniform_policy(3, 2)
        rng = np.random.default_rng(s)
        for _ in range(20):
            params = SoftmaxPolicyParams(rng.normal(size=(3, 2)))
            grad = policy_gradient(mdp, params, pi_ref, 1.0)
            for idx in np.ndindex(grad.shape):
                e = np.zeros_like(grad)
                e[idx] = h
                fd = (regularized_gain(mdp, SoftmaxPolicyParams(params.theta + e), pi_ref, 1.0).value
                      - regularized_gain(mdp, SoftmaxPolicyParams(params.theta - e), pi_ref, 1.0).value) / (2 * h)
                worst_rel = max(worst_rel, abs(grad[idx] - fd) / abs(fd))
        solved = regularized_value_iteration(mdp, pi_ref, 1.0)
        at_opt = policy_gradient(mdp, SoftmaxPolicyParams.from_policy(solved.policy), pi_ref, 1.0)
        worst_opt = max(worst_opt, float(np.max(np.abs(at_opt))))
    report(7, worst_rel < 1e-4 and worst_opt < 1e-6,
           f"max relative error {worst_rel:.2e}, max gradient at optimum {worst_opt:.2e}")


def test_criterion_08_trpo_convergence():
    worst_gap = worst_drop = 0.0
    for seed in range(20):
        mdp = random_mdp(2 + seed % 3, 2 + seed % 2, 8000 + seed)
        run = run_optimizer(mdp, AlgorithmSpec.parse("trpo", 1.0), num_iters=500)
        gains = np.array(run.gains)
        worst_gap = max(worst_gap, brute_force_optimal(mdp)[1].rho - gains[-1])
        worst_drop = max(worst_drop, float(np.max(-np.diff(gains))))
    report(8, worst_gap < 1e-3 and worst_drop <= 1e-9,
           f"max gap to optimum {worst_gap:.2e}, max gain decrease {max(worst_drop, 0.0):.2e}")


def test_criterion_09_equivalences():
    rng = np.random.default_rng(9)
    dpp_vi = dpp_mpi = mpi_eval = 0.0
    for seed in range(10):
        mdp = random_mdp(3 + seed % 2, 2 + seed % 2, 9000 + seed)
        n, m = mdp.num_states, mdp.num_actions
        pi0 = random_policy(rng, n, m)
        stepped = dpp_step(mdp, IterationState.initial(mdp, pi0), 0.7)
        try:
            regularized_value_iteration(mdp, pi0, 0.7, SolverConfig(max_iters=1))
        except NoConvergence as exc:
            first = exc.report.value
        dpp_vi = max(dpp_vi, float(np.max(np.abs(stepped.value - first))),
                     float(np.max(np.abs(stepped.policy - greedy_policy(mdp, np.zeros(n), pi0, 0.7)))))
        a = run_optimizer(mdp, AlgorithmSpec.parse("dpp", 0.3), num_iters=50)
        b = run_optimizer(mdp, AlgorithmSpec.parse("modregpi:1", 0.3), num_iters=50)
        dpp_mpi = max(dpp_mpi, max(float(np.max(np.abs(x.policy - y.policy))) for x, y in zip(a.states, b.states)))
        state = IterationState(0, pi0, rng.normal(size=n))
        out = mod_reg_pi_step(mdp, state, 0.5, 50)
        exact = evaluate_policy_regularized(mdp, out.policy, pi0, 0.5).value
        mpi_eval = max(mpi_eval, float(np.max(np.abs(out.value - (exact - exact[0])))))
    report(9, dpp_vi < 1e-12 and dpp_mpi < 1e-12 and mpi_eval < 1e-6,
           f"DPP vs VI sweep {dpp_vi:.1e}, ModRegPI-1 vs DPP {dpp_mpi:.1e}, ModRegPI-50 vs evaluation {mpi_eval:.1e}")


SWEEP_ALGOS = ("dpp", "trpo", "da", "darv")


@pytest.mark.slow
def test_criterion_10_learning_rate_sweep():
    mdp = build_gridworld(default_grid())
    cfg = ExperimentConfig(N=500, S=500, runs=20, seed=0)
    start = time.perf_counter()
    result = sweep_eta(mdp, cfg, DEFAULT_SWEEP_ETAS, SWEEP_ALGOS, jobs=os.cpu_count() or 1)
    elapsed = time.perf_counter() - start
    table = result.mean_table()
    etas = sorted(DEFAULT_SWEEP_ETAS)
    lines, shape_ok = [], True
    for algo in SWEEP_ALGOS + ("regvi",):
        means = [table[(algo, e)] for e in etas]
        lines.append(f"    {algo:6s} " + " ".join(f"{x:8.3f}" for x in means))
        if algo != "regvi":
            best_mid = max(means[1:-1])
            shape_ok &= best_mid > means[0] and best_mid > means[-1]
    best_algo = max(table[(a, e)] for a in SWEEP_ALGOS for e in etas)
    regvi_best = max(table[("regvi", e)] for e in etas)
    RESULT_LINES.append("    eta    " + " ".join(f"{e:8g}" for e in etas))
    RESULT_LINES.extend(lines)
    ok = shape_ok and regvi_best < best_algo and not result.failures and elapsed < 1800
    report(10, ok, f"inverted-U shape {'holds' if shape_ok else 'fails'}; best RegVI mean {regvi_best:.3f} "
                   f"vs best algorithm mean {best_algo:.3f}; {elapsed / 60:.1f} min")


def _digest(directory):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(Path(directory).iterdir())}


def test_criterion_11_cli_determinism(tmp_path, capsys):
    commands = [
        ["solve", "random:4x3", "--seed", "3", "--eta", "0.5"],
        ["solve", "random:4x3", "--seed", "3", "--eta", "inf", "--method", "pi"],
        ["optimize", "random:4x3", "--seed", "3", "--algo", "reps", "--iters", "20"],
        ["optimize", "random:4x3", "--seed", "3", "--algo", "darv", "--eta", "0.2", "--iters", "20"],
        ["oracle", "random:4x3", "--seed", "3"],
        ["learn", "default-grid", "--seed", "3", "--N", "20", "--S", "100", "--runs", "2"],
        ["sweep", "default-grid", "--seed", "3", "--N", "10", "--S", "100", "--runs", "2", "--etas", "0.01,0.1",
         "--algos", "dpp,darv", "--jobs", "2"],
    ]
    mismatched = []
    for i, cmd in enumerate(commands):
        digests, outputs = [], []
        for rep in range(2):
            out = tmp_path / f"c{i}_{rep}"
            code = cli_main(cmd + ["--out", str(out)])
            outputs.append((code, capsys.readouterr().out))
            digests.append(_digest(out))
        if digests[0] != digests[1] or outputs[0] != outputs[1] or outputs[0][0] != 0:
            mismatched.append(cmd[0])
    grid = tmp_path / "grid.txt"
    grid.write_text("X.1\nD1=2\n")
    codes = {cli_main(["validate", str(grid)]) for _ in range(2)}
    if codes != {0}:
        mismatched.append("validate")
    report(11, not mismatched, f"{len(commands) + 1} commands run twice; "
                               + ("byte-identical outputs" if not mismatched else f"differences in {mismatched}"))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
