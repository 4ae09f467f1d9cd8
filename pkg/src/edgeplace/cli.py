"""Command-line entry point: parse configs, dispatch runs and checks, write CSVs.

Exit codes: 0 success, 2 config error, 3 runtime error. Errors print one
machine-readable JSON line to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import solvers
from .errors import ConfigError, EdgeplaceError
from .instances import random_grid_problem, random_unit_problem
from .lyapunov import LyapunovParams
from .mobility import load_trace, spawn
from .model import GridMap
from .simulator import (
    POLICIES,
    PolicySpec,
    Scenario,
    latency_bound_check,
    make_scenario,
    queue_bound_check,
    run,
    summarize,
    verify_drift_bound,
    write_metrics_csv,
    write_summary_csv,
)

# config keys: flat JSON object; full-scale defaults apply for anything missing
_INT_KEYS = {"grid.width", "grid.height", "users.count", "horizon", "policy.k", "seed", "markov.iters"}
_FLOAT_KEYS = {"grid.cell_m", "grid.hop_delay_s", "node.capacity", "users.pedestrian_fraction", "v", "e_avg", "beta"}
_STR_KEYS = {"policy", "trace_path"}

DEFAULT_CONFIG = {
    "grid.width": 9,
    "grid.height": 7,
    "grid.cell_m": 500.0,
    "grid.hop_delay_s": 36.0,
    "node.capacity": 25e9,
    "users.count": 315,
    "users.pedestrian_fraction": 6 / 7,
    "horizon": 2000,
    "v": 1000.0,
    "e_avg": 202.5,
    "beta": 0.1,
    "policy": "best_response",
    "policy.k": None,
    "seed": 1,
    "trace_path": None,
    "markov.iters": None,
}


def _coerce(key: str, value):
    if value is None and key in ("policy.k", "trace_path", "markov.iters"):
        return None
    if key in _INT_KEYS:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"key {key!r} expects an integer, got {value!r}")
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"key {key!r} expects an integer, got {value!r}")
        return int(value)
    if key in _FLOAT_KEYS:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"key {key!r} expects a number, got {value!r}")
        return float(value)
    if key in _STR_KEYS:
        if not isinstance(value, str):
            raise ConfigError(f"key {key!r} expects a string, got {value!r}")
        return value
    raise ConfigError(f"unknown key {key!r}")


def _validate(cfg: dict) -> None:
    if cfg["grid.width"] < 1 or cfg["grid.height"] < 1:
        raise ConfigError("grid.width and grid.height must be at least 1")
    if cfg["grid.cell_m"] <= 0:
        raise ConfigError("grid.cell_m must be positive")
    if cfg["grid.hop_delay_s"] < 0:
        raise ConfigError("grid.hop_delay_s must be non-negative")
    if cfg["node.capacity"] <= 0:
        raise ConfigError("node.capacity must be positive")
    if cfg["users.count"] < 1:
        raise ConfigError("users.count must be at least 1")
    if not 0.0 <= cfg["users.pedestrian_fraction"] <= 1.0:
        raise ConfigError("users.pedestrian_fraction must lie in [0, 1]")
    if cfg["horizon"] < 1:
        raise ConfigError("horizon must be at least 1")
    if cfg["v"] < 0:
        raise ConfigError("v must be non-negative")
    if cfg["e_avg"] <= 0:
        raise ConfigError("e_avg must be positive")
    if cfg["beta"] <= 0:
        raise ConfigError("beta must be positive")
    if cfg["policy"] not in POLICIES:
        raise ConfigError(f"unknown policy {cfg['policy']!r}")
    if cfg["policy"] in ("grk", "gk") and cfg["policy.k"] is None:
        raise ConfigError("policy.k required")
    if cfg["policy.k"] is not None and cfg["policy.k"] < 0:
        raise ConfigError("policy.k must be non-negative")
    if cfg["markov.iters"] is not None and cfg["markov.iters"] < 0:
        raise ConfigError("markov.iters must be non-negative")


def load_config(path: str | None, overrides=()) -> dict:
    """Merge defaults, the JSON config document, and --set overrides."""
    cfg = dict(DEFAULT_CONFIG)
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config document must be a JSON object")
        for key, value in data.items():
            if key not in cfg:
                raise ConfigError(f"unknown key {key!r}")
            cfg[key] = _coerce(key, value)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        if key not in cfg:
            raise ConfigError(f"unknown key {key!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        cfg[key] = _coerce(key, value)
    _validate(cfg)
    return cfg


def scenario_from_config(cfg: dict) -> Scenario:
    grid = GridMap(
        width_cells=cfg["grid.width"],
        height_cells=cfg["grid.height"],
        cell_size_m=cfg["grid.cell_m"],
        hop_delay_s=cfg["grid.hop_delay_s"],
    )
    trace = None
    if cfg["trace_path"] is not None:
        trace = load_trace(cfg["trace_path"], grid)
    policy = PolicySpec(
        name=cfg["policy"],
        k=cfg["policy.k"],
        beta=cfg["beta"],
        markov_iterations=cfg["markov.iters"],
    )
    return make_scenario(
        grid=grid,
        capacity=cfg["node.capacity"],
        n_users=cfg["users.count"],
        horizon_slots=cfg["horizon"],
        v=cfg["v"],
        e_avg=cfg["e_avg"],
        policy=policy,
        seed=cfg["seed"],
        pedestrian_fraction=cfg["users.pedestrian_fraction"],
        trace=trace,
        trace_path=cfg["trace_path"],
    )


def parse_config(path: str | None, overrides=()) -> Scenario:
    return scenario_from_config(load_config(path, overrides))


def serialize_config(scenario: Scenario) -> dict:
    """Flat config dict that parses back to an equivalent scenario."""
    return {
        "grid.width": scenario.grid.width_cells,
        "grid.height": scenario.grid.height_cells,
        "grid.cell_m": scenario.grid.cell_size_m,
        "grid.hop_delay_s": scenario.grid.hop_delay_s,
        "node.capacity": scenario.nodes[0].capacity_cycles_per_s,
        "users.count": scenario.n_users,
        "users.pedestrian_fraction": scenario.pedestrian_fraction,
        "horizon": scenario.horizon_slots,
        "v": scenario.params.v,
        "e_avg": scenario.params.e_avg,
        "beta": scenario.policy.beta,
        "policy": scenario.policy.name,
        "policy.k": scenario.policy.k,
        "seed": scenario.seed,
        "trace_path": scenario.trace_path,
        "markov.iters": scenario.policy.markov_iterations,
    }


def _ensure_outdir(out: str) -> None:
    try:
        os.makedirs(out, exist_ok=True)
        probe = os.path.join(out, ".write_probe")
        with open(probe, "w") as fh:
            fh.write("")
        os.remove(probe)
    except OSError as exc:
        raise EdgeplaceError(f"output directory {out!r} is not writable: {exc}") from exc


def cmd_simulate(scenario: Scenario, out: str) -> None:
    series = run(scenario)
    write_metrics_csv(series, os.path.join(out, "metrics.csv"))
    write_summary_csv([summarize(series)], os.path.join(out, "summary.csv"))


def _v_label(v: float) -> str:
    return format(v, "g").replace(".", "_")


def cmd_sweep(scenario: Scenario, out: str, v_values: list[float]) -> None:
    summaries = []
    for v in v_values:
        params = LyapunovParams(v=float(v), e_avg=scenario.params.e_avg, e_max=scenario.params.e_max)
        series = run(replace(scenario, params=params))
        write_metrics_csv(series, os.path.join(out, f"metrics_v{_v_label(v)}.csv"))
        summaries.append(summarize(series))
    write_summary_csv(summaries, os.path.join(out, "summary.csv"))


def cmd_oracle_check(out: str, n: int, m: int, beta: float, instances: int, seed: int) -> None:
    """Solver-vs-oracle suite on small random instances; writes oracle_report.txt.

    Softmax checks (expected-cost gap, reversibility) run on unit-scale
    instances so the weights stay representable; game checks (Nash, move
    bound, ratio bound) run on grid instances with production cost formulas.
    """
    rng = spawn(seed, 900)
    gap_bound = solvers.markov_gap_bound(beta, m, n)
    worst_gap = 0.0
    worst_db = 0.0
    worst_moves = 0
    all_nash = True
    ratio_ok = True
    for _ in range(instances):
        unit = random_unit_problem(rng, n, m)
        oracle = solvers.brute_force_solve(unit)
        probs = solvers.stationary_distribution(unit, beta)
        costs = solvers.profile_costs(unit)
        worst_gap = max(worst_gap, solvers.expected_cost(probs, costs) - oracle.objective)
        worst_db = max(worst_db, solvers.detailed_balance_residual(unit, beta))

        game = random_grid_problem(rng, n, m)
        game_oracle = solvers.brute_force_solve(game)
        init = np.array([rng.randrange(m) for _ in range(n)], dtype=np.int64)
        result, cert = solvers.best_response_search(game, init)
        all_nash = all_nash and cert.is_nash
        worst_moves = max(worst_moves, cert.total_moves)
        ext = solvers.CostExtremes.from_problem(game)
        bound = solvers.approximation_ratio_bound(game, ext)
        realized = result.objective / game_oracle.objective
        ratio_ok = ratio_ok and realized <= bound + 1e-9
    lines = [
        f"instances: {instances} (n={n}, m={m}, beta={beta}, seed={seed})",
        f"softmax expected-cost gap: worst {worst_gap:.6g}, bound n*ln(m)/beta = {gap_bound:.6g} "
        f"-> {'ok' if worst_gap <= gap_bound + 1e-9 else 'EXCEEDED'}",
        f"reversibility residual (single-move pairs): worst {worst_db:.3e} -> "
        f"{'ok' if worst_db <= 1e-9 else 'EXCEEDED'}",
        f"best-response: all Nash: {all_nash}; worst moves {worst_moves} "
        f"<= bound {solvers.best_response_move_bound(m, n)}",
        f"equilibrium/optimal ratio within bound: {ratio_ok}",
    ]
    with open(os.path.join(out, "oracle_report.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_bounds_check(scenario: Scenario, out: str) -> None:
    """Latency / queue bound reports on a brute-forceable instance."""
    m = scenario.grid.node_count
    shrunk = False
    if m**scenario.n_users > 4096:
        from .simulator import mini_scenario

        scenario = mini_scenario(
            v=scenario.params.v,
            seed=scenario.seed,
            horizon_slots=min(scenario.horizon_slots, 200),
            policy=replace(scenario.policy, name="best_response"),
        )
        shrunk = True
    lat_report = latency_bound_check(scenario)
    lines = []
    if shrunk:
        lines.append("note: instance shrunk to the oracle-sized preset for enumeration")
    lines.append("== latency bounds ==")
    lines.append(lat_report.as_text())
    for name in ("markov", "best_response"):
        series = run(replace(scenario, policy=replace(scenario.policy, name=name)))
        q_report = queue_bound_check(series, scenario.params)
        drift_ok = verify_drift_bound(series, scenario.params)
        lines.append(f"== queue bounds [{name}] ==")
        lines.append(q_report.as_text())
        lines.append(f"pathwise drift bound on every slot: {'ok' if drift_ok else 'VIOLATED'}")
        write_metrics_csv(series, os.path.join(out, f"metrics_{name}.csv"))
        write_summary_csv([summarize(series)], os.path.join(out, f"summary_{name}.csv"))
    with open(os.path.join(out, "bounds_report.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


DENSITY_HEADER = "policy,users,avg_latency_s,avg_migration_cost,avg_queue,running_time_s"

COMPARE_POLICIES = ("markov", "best_response", "am", "nm", "gm", "grk", "gk", "fmec")


def cmd_compare(scenario: Scenario, out: str, densities: list[float]) -> None:
    """All policies at equal seed, across user densities; writes density.csv."""
    base_users = scenario.n_users
    rows = []
    base_summaries = []
    improvements = {}
    for density in densities:
        n = max(1, round(base_users * density))
        e_avg = scenario.params.e_avg * n / base_users
        for name in COMPARE_POLICIES:
            k = scenario.policy.k if scenario.policy.k is not None else max(1, n // 5)
            policy = PolicySpec(
                name=name,
                k=k,
                beta=scenario.policy.beta,
                markov_iterations=scenario.policy.markov_iterations,
            )
            sc = replace(
                scenario,
                n_users=n,
                params=LyapunovParams(v=scenario.params.v, e_avg=e_avg, e_max=scenario.params.e_max),
                policy=policy,
            )
            started = time.perf_counter()
            series = run(sc)
            elapsed = time.perf_counter() - started
            summary = summarize(series)
            rows.append((name, n, summary.avg_latency_s, summary.avg_migration_cost, summary.avg_queue, elapsed))
            if density == 1.0:
                base_summaries.append(summary)
                improvements[name] = summary.avg_latency_s
    lines = [DENSITY_HEADER]
    for name, n, lat, cost, queue, elapsed in rows:
        lines.append(f"{name},{n},{lat!r},{cost!r},{queue!r},{elapsed!r}")
    with open(os.path.join(out, "density.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    if base_summaries:
        write_summary_csv(base_summaries, os.path.join(out, "summary.csv"))
    report = ["policies compared at equal seed; brute_force omitted (size cap)"]
    gm = improvements.get("gm")
    if gm:
        for name in ("markov", "best_response"):
            if name in improvements:
                gain = (gm - improvements[name]) / gm * 100.0
                report.append(f"{name} latency vs gm: {gain:+.2f}%")
    with open(os.path.join(out, "compare_report.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(report) + "\n")


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x != ""]
    except ValueError:
        raise ConfigError(f"expected a comma-separated number list, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgeplace",
        description="Mobility-aware service placement simulator and bound checks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="JSON config path")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", dest="overrides")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("simulate", help="run one scenario, write metrics + summary CSVs")
    common(p)
    p = sub.add_parser("sweep", help="run the scenario once per v value")
    common(p)
    p.add_argument("--v-values", default="10,100,1000,5000")
    p = sub.add_parser("oracle-check", help="solver-vs-oracle suite on small instances")
    common(p)
    p.add_argument("--users", type=int, default=4)
    p.add_argument("--nodes", type=int, default=3)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--instances", type=int, default=50)
    p = sub.add_parser("bounds-check", help="latency/queue bound reports on a small instance")
    common(p)
    p = sub.add_parser("compare", help="all policies at equal seed across densities")
    common(p)
    p.add_argument("--densities", default="0.5,1.0,1.5,2.0")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = list(args.overrides)
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        cfg = load_config(args.config, overrides)
        _ensure_outdir(args.out)
        if args.command == "simulate":
            cmd_simulate(scenario_from_config(cfg), args.out)
        elif args.command == "sweep":
            values = _parse_floats(args.v_values)
            if len(values) < 2:
                raise ConfigError("--v-values needs at least two entries")
            cmd_sweep(scenario_from_config(cfg), args.out, values)
        elif args.command == "oracle-check":
            if args.users < 1 or args.nodes < 1:
                raise ConfigError("--users and --nodes must be positive")
            cmd_oracle_check(
                args.out, args.users, args.nodes, args.beta, args.instances, cfg["seed"]
            )
        elif args.command == "bounds-check":
            cmd_bounds_check(scenario_from_config(cfg), args.out)
        elif args.command == "compare":
            cmd_compare(scenario_from_config(cfg), args.out, _parse_floats(args.densities))
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return 2
    except EdgeplaceError as exc:
        print(json.dumps({"error": "runtime", "message": str(exc)}), file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
