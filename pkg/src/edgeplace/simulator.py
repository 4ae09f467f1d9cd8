"""Time-slotted outer loop: build each slot's problem, run the policy, track the queue.

Slot ordering: move users, draw demands and perturbations, decide placement,
charge migration against the previous placement, record latency, update the
queue. The initial placement (slot 0) puts every user on its attachment node
and is charged no migration cost.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterator

import numpy as np

from .errors import DomainError, SizeCapError
from .lyapunov import (
    LyapunovParams,
    SlotProblem,
    pathwise_drift_check,
    queue_update,
    slot_objective,
    worst_case_slot_cost,
)
from .mobility import (
    MobilityConfig,
    Trace,
    draw_perturbation,
    spawn,
    step_user,
    substream_seed,
    synthesize_users,
)
from .model import (
    DEMAND_RATE_RANGE_BPS,
    DEFAULT_NODE_CAPACITY,
    GridMap,
    MecNode,
    REFERENCE_DEMAND_CYCLES,
    SlotCostMatrices,
    attachment_nodes,
    build_cost_matrices,
    capacities_array,
    demand_cycles_from_rate,
    hop_matrix,
    make_nodes,
    slot_migration_cost,
)
from .solvers import (
    CostExtremes,
    MarkovConfig,
    SolverStats,
    baseline_always_nearest,
    baseline_greedy_k,
    baseline_no_migration,
    baseline_velocity_greedy,
    best_response_search,
    brute_force_solve,
    markov_gap_bound,
    markov_search,
    approximation_ratio_bound,
)

POLICIES = (
    "markov",
    "best_response",
    "brute_force",
    "am",
    "nm",
    "gm",
    "grk",
    "gk",
    "fmec",
)

# substream tags; every consumer of randomness owns one so input streams are
# identical across policies and v values under a shared seed
_STREAM_USERS = 1
_STREAM_IDS = 2
_STREAM_MOTION = 3
_STREAM_DEMAND = 4
_STREAM_PERTURB_COMM = 5
_STREAM_PERTURB_MIG = 6
_STREAM_POLICY = 7

MAX_DEMAND_FACTOR = DEMAND_RATE_RANGE_BPS[1] * 2640.0 / REFERENCE_DEMAND_CYCLES


@dataclass(frozen=True)
class PolicySpec:
    """Which per-slot solver runs, plus its parameters."""

    name: str
    k: int | None = None  # greedy-K selection size (grk / gk)
    beta: float = 0.1
    markov_iterations: int | None = None  # None -> 50 * N * M

    def __post_init__(self):
        if self.name not in POLICIES:
            raise DomainError(f"unknown policy {self.name!r}")
        if self.name in ("grk", "gk") and (self.k is None or self.k < 0):
            raise DomainError("policy.k required")


@dataclass(frozen=True)
class Scenario:
    """A complete, reproducible experiment description."""

    grid: GridMap
    nodes: tuple[MecNode, ...]
    n_users: int
    horizon_slots: int
    params: LyapunovParams
    mobility: MobilityConfig
    policy: PolicySpec
    seed: int
    pedestrian_fraction: float = 6 / 7
    trace_path: str | None = None
    trace: Trace | None = None
    preset_users: tuple | None = None
    brute_force_cap: int = 2**20

    def __post_init__(self):
        if self.n_users < 1:
            raise DomainError("need at least one user")
        if self.horizon_slots < 1:
            raise DomainError("horizon must be at least one slot")
        if self.trace is not None:
            if self.trace.n_users != self.n_users:
                raise DomainError(
                    f"trace covers {self.trace.n_users} users, scenario has {self.n_users}"
                )
            if self.trace.horizon < self.horizon_slots + 1:
                raise DomainError(
                    "trace must cover horizon_slots + 1 slots (including slot 0)"
                )


def make_scenario(
    grid: GridMap | None = None,
    capacity: float = DEFAULT_NODE_CAPACITY,
    n_users: int = 315,
    horizon_slots: int = 2000,
    v: float = 1000.0,
    e_avg: float = 202.5,
    e_max: float | None = None,
    policy: PolicySpec | None = None,
    seed: int = 1,
    pedestrian_fraction: float = 6 / 7,
    mobility: MobilityConfig | None = None,
    trace: Trace | None = None,
    trace_path: str | None = None,
    preset_users=None,
) -> Scenario:
    """Assemble a scenario with the default full-scale parameter set."""
    grid = grid or GridMap(width_cells=9, height_cells=7)
    mobility = mobility or MobilityConfig(pedestrian_fraction=pedestrian_fraction)
    if e_max is None:
        e_max = worst_case_slot_cost(grid, n_users, MAX_DEMAND_FACTOR)
    return Scenario(
        grid=grid,
        nodes=make_nodes(grid, capacity),
        n_users=n_users,
        horizon_slots=horizon_slots,
        params=LyapunovParams(v=v, e_avg=e_avg, e_max=e_max),
        mobility=mobility,
        policy=policy or PolicySpec(name="best_response"),
        seed=seed,
        pedestrian_fraction=pedestrian_fraction,
        trace=trace,
        trace_path=trace_path,
        preset_users=tuple(preset_users) if preset_users is not None else None,
    )


def desk_scenario(**overrides) -> Scenario:
    """Desk-scale preset: 3x3 grid, 30 users, 500 slots, budget scaled per user."""
    defaults = dict(
        grid=GridMap(width_cells=3, height_cells=3),
        n_users=30,
        horizon_slots=500,
        v=25.0,
        e_avg=202.5 * 30 / 315,
        policy=PolicySpec(name="best_response", beta=0.1, markov_iterations=600),
    )
    defaults.update(overrides)
    return make_scenario(**defaults)


def mini_scenario(**overrides) -> Scenario:
    """Oracle-sized preset (2x2 grid, 6 users) where every slot can be brute forced."""
    defaults = dict(
        grid=GridMap(width_cells=2, height_cells=2),
        n_users=6,
        horizon_slots=200,
        v=50.0,
        e_avg=202.5 * 6 / 315,
        policy=PolicySpec(name="best_response", beta=0.1, markov_iterations=240),
    )
    defaults.update(overrides)
    return make_scenario(**defaults)


@dataclass(frozen=True)
class SlotRecord:
    """Everything recorded about one executed slot."""

    t: int
    computing_s: np.ndarray  # (N,)
    communication_s: np.ndarray  # (N,)
    sum_latency_s: float
    migration_cost: float
    queue_before: float
    queue_after: float
    objective: float
    solver_iterations: int
    solver_moves: int

    @property
    def avg_latency_s(self) -> float:
        return self.sum_latency_s / len(self.computing_s)

    def delay_breakdown(self, k: int):
        from .model import DelayBreakdown

        return DelayBreakdown(
            computing_s=float(self.computing_s[k]),
            communication_s=float(self.communication_s[k]),
        )


@dataclass
class MetricsSeries:
    """Per-slot records plus run metadata and derived running averages."""

    records: list[SlotRecord]
    policy: str
    v: float
    e_avg: float
    seed: int
    n_users: int
    wall_time_s: float = 0.0
    running_avg_latency: np.ndarray = field(default_factory=lambda: np.empty(0))
    running_avg_cost: np.ndarray = field(default_factory=lambda: np.empty(0))
    running_avg_queue: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        if self.records:
            steps = np.arange(1, len(self.records) + 1)
            lat = np.array([r.sum_latency_s for r in self.records])
            cost = np.array([r.migration_cost for r in self.records])
            queue = np.array([r.queue_after for r in self.records])
            self.running_avg_latency = np.cumsum(lat) / steps
            self.running_avg_cost = np.cumsum(cost) / steps
            self.running_avg_queue = np.cumsum(queue) / steps


@dataclass(frozen=True)
class RunSummary:
    policy: str
    v: float
    e_avg: float
    seed: int
    avg_latency_s: float
    avg_migration_cost: float
    avg_queue: float
    final_queue: float
    wall_time_s: float


@dataclass(frozen=True)
class SlotInputs:
    """Policy-independent realized inputs of one slot."""

    t: int
    positions: np.ndarray  # (N, 2)
    prev_positions: np.ndarray  # (N, 2)
    requests: np.ndarray  # (N,)
    attachments: np.ndarray  # (N,)
    comm_perturbation: np.ndarray  # (N,)
    matrices: SlotCostMatrices


def _initial_users(scenario: Scenario):
    """Users at slot 0, with randomly assigned IDs (a seed-derived permutation)."""
    if scenario.preset_users is not None:
        return list(scenario.preset_users)
    users = synthesize_users(
        scenario.n_users,
        scenario.grid,
        scenario.mobility,
        spawn(scenario.seed, _STREAM_USERS),
    )
    spawn(scenario.seed, _STREAM_IDS).shuffle(users)
    return [replace(u, index=i) for i, u in enumerate(users)]


def slot_inputs(scenario: Scenario) -> Iterator[SlotInputs]:
    """Yield each slot's realized inputs; identical across policies at equal seed."""
    grid = scenario.grid
    n = scenario.n_users
    hops = hop_matrix(grid)
    demand_rng = spawn(scenario.seed, _STREAM_DEMAND)
    comm_rng = spawn(scenario.seed, _STREAM_PERTURB_COMM)
    mig_rng = spawn(scenario.seed, _STREAM_PERTURB_MIG)

    if scenario.trace is not None:
        positions = scenario.trace.positions[0].copy()
        users = None
        motion_rngs = None
    else:
        users = _initial_users(scenario)
        motion_rngs = [spawn(scenario.seed, _STREAM_MOTION, k) for k in range(n)]
        positions = np.array([u.position_m for u in users], dtype=float)

    for t in range(1, scenario.horizon_slots + 1):
        prev_positions = positions
        if scenario.trace is not None:
            positions = scenario.trace.positions[t].copy()
        else:
            users = [
                step_user(u, grid, scenario.mobility.slot_length_s, motion_rngs[k])
                for k, u in enumerate(users)
            ]
            positions = np.array([u.position_m for u in users], dtype=float)
        rates = np.array([demand_rng.uniform(*DEMAND_RATE_RANGE_BPS) for _ in range(n)])
        requests = demand_cycles_from_rate(rates)
        u_comm = np.array([draw_perturbation(comm_rng) for _ in range(n)])
        u_mig = np.array([draw_perturbation(mig_rng) for _ in range(n)])
        attachments = attachment_nodes(positions, grid)
        matrices = build_cost_matrices(
            grid,
            attachments,
            u_comm,
            u_mig,
            requests / REFERENCE_DEMAND_CYCLES,
            hops=hops,
        )
        yield SlotInputs(
            t=t,
            positions=positions,
            prev_positions=prev_positions,
            requests=requests,
            attachments=attachments,
            comm_perturbation=u_comm,
            matrices=matrices,
        )


def _initial_assignment(scenario: Scenario) -> np.ndarray:
    if scenario.trace is not None:
        positions = scenario.trace.positions[0]
    else:
        positions = np.array([u.position_m for u in _initial_users(scenario)])
    return attachment_nodes(positions, scenario.grid)


def run(scenario: Scenario) -> MetricsSeries:
    """Execute the scenario and return its full metrics series."""
    start = time.perf_counter()
    grid = scenario.grid
    n = scenario.n_users
    caps = capacities_array(scenario.nodes)
    params = scenario.params
    policy = scenario.policy
    hops = hop_matrix(grid)

    prev_assignment = _initial_assignment(scenario)
    initial_assignment = prev_assignment.copy()
    q = 0.0
    records: list[SlotRecord] = []

    default_markov_iters = 50 * n * grid.node_count
    users_range = np.arange(n)

    for inputs in slot_inputs(scenario):
        problem = SlotProblem.build(
            inputs.matrices, inputs.requests, prev_assignment, q, params, caps
        )
        if policy.name == "markov":
            iters = (
                policy.markov_iterations
                if policy.markov_iterations is not None
                else default_markov_iters
            )
            result = markov_search(
                problem,
                MarkovConfig(
                    beta=policy.beta,
                    iterations=iters,
                    seed=substream_seed(scenario.seed, _STREAM_POLICY, inputs.t),
                ),
            )
            assignment = result.profile.as_array()
            stats = result.stats
        elif policy.name == "best_response":
            result, _cert = best_response_search(problem, prev_assignment)
            assignment = result.profile.as_array()
            stats = result.stats
        elif policy.name == "brute_force":
            result = brute_force_solve(problem, cap=scenario.brute_force_cap)
            assignment = result.profile.as_array()
            stats = result.stats
        elif policy.name in ("am", "gm"):
            assignment = baseline_always_nearest(inputs.attachments)
            stats = SolverStats(iterations=1, moves=int((assignment != prev_assignment).sum()))
        elif policy.name == "nm":
            assignment = baseline_no_migration(initial_assignment)
            stats = SolverStats(iterations=1, moves=0)
        elif policy.name == "grk":
            grk_rng = spawn(scenario.seed, _STREAM_POLICY, inputs.t)
            assignment = baseline_greedy_k(problem, policy.k, "random", rng=grk_rng)
            stats = SolverStats(iterations=1, moves=int((assignment != prev_assignment).sum()))
        elif policy.name == "gk":
            assignment = baseline_greedy_k(problem, policy.k, "descending_latency")
            stats = SolverStats(iterations=1, moves=int((assignment != prev_assignment).sum()))
        elif policy.name == "fmec":
            predicted = 2.0 * inputs.positions - inputs.prev_positions
            predicted[:, 0] = np.clip(predicted[:, 0], 0.0, grid.width_m)
            predicted[:, 1] = np.clip(predicted[:, 1], 0.0, grid.height_m)
            pred_att = attachment_nodes(predicted, grid)
            # shared slot perturbation, applied at the predicted attachment
            pred_comm = (
                hops[pred_att, :] * grid.hop_delay_s * inputs.comm_perturbation[:, None]
            )
            assignment = baseline_velocity_greedy(problem, pred_comm)
            stats = SolverStats(iterations=1, moves=int((assignment != prev_assignment).sum()))
        else:  # pragma: no cover - PolicySpec already validates
            raise DomainError(f"unknown policy {policy.name!r}")

        e_t = slot_migration_cost(prev_assignment, assignment, inputs.matrices.migration)
        loads = np.bincount(assignment, minlength=grid.node_count)
        computing = inputs.requests * loads[assignment] / caps[assignment]
        communication = inputs.matrices.comm_delay[users_range, assignment]
        sum_latency = float(computing.sum() + communication.sum())
        objective = slot_objective(assignment, problem)
        q_next = float(queue_update(q, e_t, params.e_avg))
        records.append(
            SlotRecord(
                t=inputs.t,
                computing_s=computing,
                communication_s=communication,
                sum_latency_s=sum_latency,
                migration_cost=e_t,
                queue_before=q,
                queue_after=q_next,
                objective=objective,
                solver_iterations=stats.iterations,
                solver_moves=stats.moves,
            )
        )
        prev_assignment = assignment
        q = q_next

    return MetricsSeries(
        records=records,
        policy=policy.name,
        v=params.v,
        e_avg=params.e_avg,
        seed=scenario.seed,
        n_users=n,
        wall_time_s=time.perf_counter() - start,
    )


def summarize(series: MetricsSeries) -> RunSummary:
    """Arithmetic means over the horizon."""
    if not series.records:
        raise DomainError("cannot summarize an empty series")
    n_slots = len(series.records)
    return RunSummary(
        policy=series.policy,
        v=series.v,
        e_avg=series.e_avg,
        seed=series.seed,
        avg_latency_s=sum(r.sum_latency_s for r in series.records) / n_slots / series.n_users,
        avg_migration_cost=sum(r.migration_cost for r in series.records) / n_slots,
        avg_queue=sum(r.queue_after for r in series.records) / n_slots,
        final_queue=series.records[-1].queue_after,
        wall_time_s=series.wall_time_s,
    )


def sweep_v(scenario: Scenario, v_values) -> list[RunSummary]:
    """One run per v under common random numbers (same seed, same streams)."""
    values = list(v_values)
    if len(values) < 2:
        raise DomainError("sweep needs at least two v values")
    out = []
    for v in values:
        params = LyapunovParams(v=float(v), e_avg=scenario.params.e_avg, e_max=scenario.params.e_max)
        out.append(summarize(run(replace(scenario, params=params))))
    return out


def verify_drift_bound(series: MetricsSeries, params: LyapunovParams) -> bool:
    """Every recorded slot satisfies the pathwise quadratic drift bound."""
    return all(
        pathwise_drift_check(
            r.queue_before, r.queue_after, r.migration_cost, r.sum_latency_s, params
        )
        for r in series.records
    )


@dataclass(frozen=True)
class QueueBoundReport:
    avg_queue: float
    final_queue: float
    horizon: int
    queue_rate: float  # final_queue / horizon
    queue_rate_threshold: float
    queue_rate_ok: bool
    budget_identity_ok: bool  # sum(E) <= T * e_avg + Q(T), checked exactly
    replay_ok: bool  # float replay reproduces recorded queue bitwise
    avg_cost: float
    e_avg: float

    def as_text(self) -> str:
        lines = [
            f"slots: {self.horizon}",
            f"time-averaged queue: {self.avg_queue:.6g}",
            f"final queue: {self.final_queue:.6g}",
            f"queue rate Q(T)/T: {self.queue_rate:.6g} (threshold {self.queue_rate_threshold:.6g}) "
            f"-> {'ok' if self.queue_rate_ok else 'EXCEEDED'}",
            f"avg migration cost: {self.avg_cost:.6g} vs budget {self.e_avg:.6g}",
            f"budget identity sum(E) <= T*e_avg + Q(T): {'ok' if self.budget_identity_ok else 'VIOLATED'}",
            f"queue replay bitwise: {'ok' if self.replay_ok else 'MISMATCH'}",
        ]
        return "\n".join(lines)


def queue_bound_check(
    series: MetricsSeries, params: LyapunovParams, threshold: float | None = None
) -> QueueBoundReport:
    """Queue stability report: rate, exact budget identity, recursion replay.

    The budget identity is verified in exact rational arithmetic (every float
    is an exact rational), so equality-tight runs cannot fail on float noise.
    """
    if threshold is None:
        threshold = 0.05 * params.e_avg
    costs = [r.migration_cost for r in series.records]
    horizon = len(costs)

    replay = 0.0
    replay_ok = True
    for r in series.records:
        replay = float(queue_update(replay, r.migration_cost, params.e_avg))
        if replay != r.queue_after:
            replay_ok = False
            break

    q_exact = Fraction(0)
    e_avg_exact = Fraction(params.e_avg)
    total = Fraction(0)
    for e in costs:
        e_exact = Fraction(e)
        total += e_exact
        q_exact = max(q_exact + e_exact - e_avg_exact, Fraction(0))
    identity_ok = total <= horizon * e_avg_exact + q_exact

    final_q = series.records[-1].queue_after
    avg_q = sum(r.queue_after for r in series.records) / horizon
    rate = final_q / horizon
    return QueueBoundReport(
        avg_queue=avg_q,
        final_queue=final_q,
        horizon=horizon,
        queue_rate=rate,
        queue_rate_threshold=threshold,
        queue_rate_ok=rate <= threshold,
        budget_identity_ok=identity_ok,
        replay_ok=replay_ok,
        avg_cost=sum(costs) / horizon,
        e_avg=params.e_avg,
    )


@dataclass(frozen=True)
class LatencyBoundReport:
    """Realized time-averaged latency against its analytic upper bounds."""

    t_opt_proxy: float  # per-slot latency-optimal total, time-averaged (a proxy,
    # not the offline infimum: it ignores the budget entirely)
    realized_markov: float
    realized_best_response: float
    bound_markov: float
    bound_best_response: float
    ratio_bound: float
    b_over_v: float
    entropy_term: float
    markov_within_bound: bool
    best_response_within_bound: bool

    def as_text(self) -> str:
        return "\n".join(
            [
                f"latency-optimal proxy (per-slot oracle): {self.t_opt_proxy:.6g}",
                f"drift constant / v: {self.b_over_v:.6g}",
                f"softmax entropy term: {self.entropy_term:.6g}",
                f"chain search: realized {self.realized_markov:.6g} "
                f"<= bound {self.bound_markov:.6g} -> "
                f"{'ok' if self.markov_within_bound else 'EXCEEDED'}",
                f"best response: realized {self.realized_best_response:.6g} "
                f"<= bound {self.bound_best_response:.6g} (ratio bound {self.ratio_bound:.6g}) -> "
                f"{'ok' if self.best_response_within_bound else 'EXCEEDED'}",
            ]
        )


def latency_bound_check(scenario: Scenario, cap: int = 4096) -> LatencyBoundReport:
    """Compare both online solvers' realized latency against their bounds.

    Needs an instance small enough to brute force the pure-latency optimum of
    every slot. The proxy lower-bounds each slot's achievable total latency,
    budget ignored.
    """
    m = scenario.grid.node_count
    if m**scenario.n_users > cap:
        raise SizeCapError(
            f"{m}^{scenario.n_users} placements exceed the bound-check cap {cap}"
        )
    caps = capacities_array(scenario.nodes)
    neutral = LyapunovParams(v=1.0, e_avg=scenario.params.e_avg, e_max=scenario.params.e_max)

    proxy_total = 0.0
    extremes: CostExtremes | None = None
    n_slots = 0
    ratio_problem = None
    for inputs in slot_inputs(scenario):
        prev = inputs.attachments  # prev placement is irrelevant at q = 0
        problem = SlotProblem.build(inputs.matrices, inputs.requests, prev, 0.0, neutral, caps)
        proxy_total += brute_force_solve(problem, cap=cap).objective
        ext = CostExtremes.from_problem(problem)
        extremes = ext if extremes is None else extremes.merge(ext)
        ratio_problem = problem
        n_slots += 1
    t_opt_proxy = proxy_total / n_slots

    markov_series = run(replace(scenario, policy=replace(scenario.policy, name="markov")))
    br_series = run(replace(scenario, policy=replace(scenario.policy, name="best_response")))
    realized_markov = sum(r.sum_latency_s for r in markov_series.records) / n_slots
    realized_br = sum(r.sum_latency_s for r in br_series.records) / n_slots

    v = scenario.params.v
    b_over_v = scenario.params.b / v
    entropy = markov_gap_bound(scenario.policy.beta, m, scenario.n_users) / v
    ratio = approximation_ratio_bound(ratio_problem, extremes)
    bound_markov = t_opt_proxy + b_over_v + entropy
    bound_br = ratio * t_opt_proxy + b_over_v
    return LatencyBoundReport(
        t_opt_proxy=t_opt_proxy,
        realized_markov=realized_markov,
        realized_best_response=realized_br,
        bound_markov=bound_markov,
        bound_best_response=bound_br,
        ratio_bound=ratio,
        b_over_v=b_over_v,
        entropy_term=entropy,
        markov_within_bound=realized_markov <= bound_markov,
        best_response_within_bound=realized_br <= bound_br,
    )


# --- CSV output (the simulator's external interface) -------------------------

METRICS_HEADER = "t,sum_latency_s,avg_latency_s,migration_cost,queue,objective,solver_moves,solver_iters"
SUMMARY_HEADER = "policy,v,e_avg,seed,avg_latency_s,avg_migration_cost,avg_queue,final_queue,wall_time_s"


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_metrics_csv(series: MetricsSeries, path: str) -> None:
    """One row per slot; ``queue`` is the backlog after the slot's update."""
    lines = [METRICS_HEADER]
    for r in series.records:
        lines.append(
            ",".join(
                [
                    str(r.t),
                    _fmt(r.sum_latency_s),
                    _fmt(r.avg_latency_s),
                    _fmt(r.migration_cost),
                    _fmt(r.queue_after),
                    _fmt(r.objective),
                    str(r.solver_moves),
                    str(r.solver_iterations),
                ]
            )
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_summary_csv(summaries, path: str) -> None:
    lines = [SUMMARY_HEADER]
    for s in summaries:
        lines.append(
            ",".join(
                [
                    s.policy,
                    _fmt(s.v),
                    _fmt(s.e_avg),
                    str(s.seed),
                    _fmt(s.avg_latency_s),
                    _fmt(s.avg_migration_cost),
                    _fmt(s.avg_queue),
                    _fmt(s.final_queue),
                    _fmt(s.wall_time_s),
                ]
            )
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
