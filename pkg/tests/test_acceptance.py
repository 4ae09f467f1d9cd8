"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines and logged figures of merit.
"""

import os
import time
from fractions import Fraction

import numpy as np
import pytest

from edgeplace import solvers
from edgeplace.cli import main as cli_main
from edgeplace.instances import random_grid_problem, random_unit_problem
from edgeplace.lyapunov import queue_update
from edgeplace.mobility import SplitMix64, spawn
from edgeplace.simulator import (
    PolicySpec,
    desk_scenario,
    mini_scenario,
    queue_bound_check,
    run,
    summarize,
    sweep_v,
    verify_drift_bound,
)

ACCEPT_SEED = 0xACCE57


def _report(criterion: int, message: str) -> None:
    print(f"[criterion {criterion}] PASS: {message}")


def test_criterion_1_queue_update_exactness():
    """Queue recursion matches max(q + e - e_avg, 0) on 1e5 randomized triples."""
    started = time.perf_counter()
    rng = SplitMix64(ACCEPT_SEED)

    for _ in range(100_000):
        q = rng.randrange(1000)
        e = rng.randrange(1000)
        a = 1 + rng.randrange(999)
        assert queue_update(q, e, a) == max(q + e - a, 0)  # integers: exact

    for _ in range(2_000):
        q = Fraction(rng.randrange(10_000), 1 + rng.randrange(97))
        e = Fraction(rng.randrange(10_000), 1 + rng.randrange(89))
        a = Fraction(1 + rng.randrange(10_000), 1 + rng.randrange(83))
        assert queue_update(q, e, a) == max(q + e - a, 0)  # rationals: exact

    for _ in range(100_000):
        q = rng.uniform(0.0, 1e3)
        e = rng.uniform(0.0, 1e3)
        a = rng.uniform(1e-3, 1e3)
        assert abs(queue_update(q, e, a) - max(q + e - a, 0.0)) <= 1e-12

    elapsed = time.perf_counter() - started
    assert elapsed < 1.0, f"criterion 1 runtime {elapsed:.2f}s exceeds 1s"
    _report(1, f"2e5 float/int triples + 2e3 rationals exact in {elapsed:.2f}s")


def test_criterion_2_drift_bound_every_slot_every_policy():
    """The quadratic drift bound holds pathwise on every slot of every policy."""
    started = time.perf_counter()
    slots_checked = 0
    for name in ("markov", "best_response", "am", "nm", "gm", "grk", "gk", "fmec"):
        sc = desk_scenario(
            policy=PolicySpec(name=name, beta=0.1, markov_iterations=600, k=6)
        )
        series = run(sc)
        assert verify_drift_bound(series, sc.params), f"drift bound failed for {name}"
        slots_checked += len(series.records)
    # the exact oracle cannot enumerate the desk grid; it is covered on the
    # brute-forceable preset instead
    sc = mini_scenario(policy=PolicySpec(name="brute_force", beta=0.1))
    series = run(sc)
    assert verify_drift_bound(series, sc.params)
    slots_checked += len(series.records)
    elapsed = time.perf_counter() - started
    assert elapsed < 30.0, f"criterion 2 runtime {elapsed:.1f}s exceeds 30s"
    _report(2, f"{slots_checked} slots across 9 policies in {elapsed:.1f}s")


def test_criterion_3_best_response_oracle_equivalence():
    """200 random instances: Nash certificates, move bound, ratio bound."""
    started = time.perf_counter()
    rng = spawn(ACCEPT_SEED, 3)
    worst_moves_margin = np.inf
    worst_ratio_margin = np.inf
    for _ in range(200):
        n = 2 + rng.randrange(4)  # 2..5
        m = 1 + rng.randrange(3)  # 1..3
        v = (1.0, 100.0, 1000.0)[rng.randrange(3)]
        problem = random_grid_problem(rng, n, m, v=v)
        init = np.array([rng.randrange(m) for _ in range(n)], dtype=np.int64)
        result, cert = solvers.best_response_search(problem, init)
        assert cert.is_nash, "termination profile failed the deviation scan"
        bound_moves = solvers.best_response_move_bound(m, n)
        assert cert.total_moves <= bound_moves
        worst_moves_margin = min(worst_moves_margin, bound_moves - cert.total_moves)
        oracle = solvers.brute_force_solve(problem)
        ext = solvers.CostExtremes.from_problem(problem)
        ratio_bound = solvers.approximation_ratio_bound(problem, ext)
        realized = result.objective / oracle.objective
        assert realized <= ratio_bound + 1e-9
        worst_ratio_margin = min(worst_ratio_margin, ratio_bound - realized)
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0, f"criterion 3 runtime {elapsed:.1f}s exceeds 10s"
    _report(
        3,
        f"200 instances Nash within bounds in {elapsed:.1f}s "
        f"(worst ratio margin {worst_ratio_margin:.3g})",
    )


def test_criterion_4_softmax_oracle_equivalence():
    """Exact stationary expected cost within the optimality gap; reversibility."""
    started = time.perf_counter()
    rng = spawn(ACCEPT_SEED, 4)
    shapes = [(2, 2), (3, 2), (4, 2), (6, 2), (12, 2), (3, 3), (5, 3), (7, 3)]
    worst_gap_ratio = 0.0
    worst_residual = 0.0
    for trial in range(32):
        n, m = shapes[trial % len(shapes)]
        assert m**n <= 4096
        problem = random_unit_problem(rng, n, m)
        costs = solvers.profile_costs(problem)
        optimum = costs.min()
        for beta in (1.0, 5.0):
            probs = solvers.stationary_distribution(problem, beta)
            gap = solvers.expected_cost(probs, costs) - optimum
            bound = solvers.markov_gap_bound(beta, m, n)
            assert -1e-12 <= gap <= bound + 1e-9
            worst_gap_ratio = max(worst_gap_ratio, gap / bound)
            residual = solvers.detailed_balance_residual(problem, beta)
            assert residual <= 1e-9
            worst_residual = max(worst_residual, residual)
    elapsed = time.perf_counter() - started
    assert elapsed < 30.0, f"criterion 4 runtime {elapsed:.1f}s exceeds 30s"
    _report(
        4,
        f"32 instances x 2 temperatures: worst gap/bound {worst_gap_ratio:.3f}, "
        f"worst reversibility residual {worst_residual:.2e}, {elapsed:.1f}s",
    )


@pytest.mark.parametrize("policy", ["best_response", "markov"])
def test_criterion_5_v_tradeoff_trend(policy):
    """Latency non-increasing and queue non-decreasing in v (2% slack, 5 seeds)."""
    started = time.perf_counter()
    v_values = [10.0, 100.0, 1000.0, 5000.0]
    latency = {v: [] for v in v_values}
    queue = {v: [] for v in v_values}
    for seed in range(1, 6):
        sc = desk_scenario(
            seed=seed, policy=PolicySpec(name=policy, beta=0.1, markov_iterations=600)
        )
        for summary in sweep_v(sc, v_values):
            latency[summary.v].append(summary.avg_latency_s)
            queue[summary.v].append(summary.avg_queue)
    mean_latency = [float(np.mean(latency[v])) for v in v_values]
    mean_queue = [float(np.mean(queue[v])) for v in v_values]
    for i in range(len(v_values) - 1):
        assert mean_latency[i + 1] <= mean_latency[i] * 1.02, (
            f"latency increased from v={v_values[i]} to v={v_values[i+1]}: {mean_latency}"
        )
        assert mean_queue[i + 1] >= mean_queue[i] * 0.98, (
            f"queue decreased from v={v_values[i]} to v={v_values[i+1]}: {mean_queue}"
        )
    elapsed = time.perf_counter() - started
    assert elapsed < 300.0, f"criterion 5 runtime {elapsed:.0f}s exceeds 5min"
    _report(
        5,
        f"{policy}: latency {[round(x, 2) for x in mean_latency]}, "
        f"queue {[round(x, 1) for x in mean_queue]}, {elapsed:.0f}s",
    )


@pytest.mark.parametrize("policy", ["best_response", "markov"])
def test_criterion_6_budget_compliance(policy):
    """2000-slot desk run spends within 1.05x budget; telescoped identity exact."""
    started = time.perf_counter()
    sc = desk_scenario(
        horizon_slots=2000,
        policy=PolicySpec(name=policy, beta=0.1, markov_iterations=600),
    )
    series = run(sc)
    summary = summarize(series)
    assert summary.avg_migration_cost <= sc.params.e_avg * 1.05, (
        f"{policy} spent {summary.avg_migration_cost:.3f} vs budget {sc.params.e_avg:.3f}"
    )
    report = queue_bound_check(series, sc.params)
    assert report.budget_identity_ok  # exact rational arithmetic
    assert report.replay_ok
    elapsed = time.perf_counter() - started
    assert elapsed < 300.0, f"criterion 6 runtime {elapsed:.0f}s exceeds 5min"
    _report(
        6,
        f"{policy}: avg cost {summary.avg_migration_cost:.3f} <= "
        f"{1.05 * sc.params.e_avg:.3f}, identity exact, {elapsed:.0f}s",
    )


def test_criterion_7_baseline_ordering_at_v1000():
    """Both online solvers meet or beat the always-nearest greedy at v=1000."""
    started = time.perf_counter()
    results = {}
    for name in ("markov", "best_response", "gm"):
        sc = desk_scenario(
            v=1000.0, policy=PolicySpec(name=name, beta=0.1, markov_iterations=600)
        )
        results[name] = summarize(run(sc)).avg_latency_s
    for name in ("markov", "best_response"):
        assert results[name] <= results["gm"], (
            f"{name} latency {results[name]:.4f} above gm {results['gm']:.4f}"
        )
    improvement = {
        name: (results["gm"] - results[name]) / results["gm"] * 100.0
        for name in ("markov", "best_response")
    }
    elapsed = time.perf_counter() - started
    _report(
        7,
        "improvement vs gm: "
        f"markov {improvement['markov']:+.2f}%, "
        f"best_response {improvement['best_response']:+.2f}% "
        f"(non-negative passes; full-scale reference range 8-56%), {elapsed:.0f}s",
    )


def test_criterion_8_degenerate_cases():
    """Zero temperature gives uniform transitions; single node forces the profile."""
    rng = spawn(ACCEPT_SEED, 8)
    for _ in range(20):
        n, m = 2 + rng.randrange(3), 2 + rng.randrange(3)
        problem = random_unit_problem(rng, n, m)
        assignment = np.array([rng.randrange(m) for _ in range(n)], dtype=np.int64)
        dist = solvers.markov_transition_distribution(
            problem, assignment, rng.randrange(n), beta=0.0
        )
        assert np.abs(dist - 1.0 / m).max() <= 1e-12

    for _ in range(10):
        n = 1 + rng.randrange(4)
        problem = random_unit_problem(rng, n, 1)
        unique = tuple([0] * n)
        assert solvers.brute_force_solve(problem).profile.nodes == unique
        res, cert = solvers.best_response_search(problem, np.zeros(n, dtype=np.int64))
        assert res.profile.nodes == unique and cert.is_nash
        chain = solvers.markov_search(
            problem, solvers.MarkovConfig(beta=1.0, iterations=25, seed=rng.next_u64())
        )
        assert chain.profile.nodes == unique
    _report(8, "uniform transitions at beta=0 (1e-12); single-node profiles unique")


TINY_ARGS = [
    "--set", "users.count=5",
    "--set", "grid.width=2",
    "--set", "grid.height=2",
    "--set", "horizon=8",
    "--set", "e_avg=4",
    "--set", "v=25",
    "--set", "markov.iters=80",
]


def _csv_files(path: str):
    return sorted(f for f in os.listdir(path) if f.endswith(".csv"))


def _strip_timing(path: str) -> tuple[str, list[str]]:
    """CSV content with measured-timing columns masked; returns masked names."""
    lines = open(path, encoding="utf-8").read().strip().split("\n")
    header = lines[0].split(",")
    timing = [i for i, name in enumerate(header) if name in ("wall_time_s", "running_time_s")]
    masked = [header[i] for i in timing]
    out = []
    for line in lines:
        fields = line.split(",")
        out.append(",".join("<t>" if i in timing else f for i, f in enumerate(fields)))
    return "\n".join(out), masked


def test_criterion_9_command_determinism(tmp_path):
    """Equal config+seed reproduces every CSV byte-for-byte.

    The summary/density formats carry a measured wall-time column that can
    never reproduce across executions; it is masked here and asserted to be
    the only differing field (see the decisions ledger).
    """
    commands = {
        "simulate": ["simulate"] + TINY_ARGS,
        "sweep": ["sweep", "--v-values", "10,100"] + TINY_ARGS,
        "oracle-check": ["oracle-check", "--instances", "5"],
        "bounds-check": ["bounds-check"] + TINY_ARGS + ["--set", "users.count=4"],
        "compare": ["compare", "--densities", "1.0"] + TINY_ARGS + ["--set", "horizon=4"],
    }
    for name, argv in commands.items():
        outs = []
        for rep in ("a", "b"):
            out = str(tmp_path / f"{name}_{rep}")
            assert cli_main(argv + ["--out", out]) == 0
            outs.append(out)
        assert _csv_files(outs[0]) == _csv_files(outs[1])
        for fname in _csv_files(outs[0]):
            p0, p1 = os.path.join(outs[0], fname), os.path.join(outs[1], fname)
            raw0 = open(p0, "rb").read()
            raw1 = open(p1, "rb").read()
            masked0, cols0 = _strip_timing(p0)
            masked1, cols1 = _strip_timing(p1)
            assert masked0 == masked1, f"{name}/{fname} differs beyond timing columns"
            if not cols0:
                assert raw0 == raw1, f"{name}/{fname} not byte-identical"
        # text reports must reproduce too (they carry no timing)
        for fname in sorted(os.listdir(outs[0])):
            if fname.endswith(".txt"):
                t0 = open(os.path.join(outs[0], fname), "rb").read()
                t1 = open(os.path.join(outs[1], fname), "rb").read()
                assert t0 == t1, f"{name}/{fname} report not byte-identical"
    _report(
        9,
        "simulate/sweep/oracle-check/bounds-check/compare reproduce byte-identically "
        "(timing columns masked, verified sole difference)",
    )
