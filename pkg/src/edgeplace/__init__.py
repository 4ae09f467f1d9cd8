"""Mobility-aware dynamic service placement: simulator, solvers, and bounds."""

from .errors import (
    ConfigError,
    DomainError,
    EdgeplaceError,
    InvariantViolation,
    SizeCapError,
    TraceFormatError,
)
from .lyapunov import (
    LyapunovParams,
    SlotProblem,
    VirtualQueue,
    drift_bound_constant,
    lyapunov_value,
    pathwise_drift_check,
    queue_update,
    slot_objective,
    worst_case_slot_cost,
)
from .mobility import (
    MobilityConfig,
    SplitMix64,
    Trace,
    draw_perturbation,
    load_trace,
    spawn,
    step_user,
    substream_seed,
    synthesize_users,
)
from .model import (
    DelayBreakdown,
    GridMap,
    MecNode,
    PlacementProfile,
    ServiceRequest,
    SlotCostMatrices,
    UserState,
    attachment_cell,
    attachment_node,
    communication_delay,
    computing_delay,
    hop_distance,
    migration_cost_entry,
    node_loads,
    slot_migration_cost,
)
from .simulator import (
    MetricsSeries,
    PolicySpec,
    RunSummary,
    Scenario,
    SlotRecord,
    desk_scenario,
    latency_bound_check,
    make_scenario,
    mini_scenario,
    queue_bound_check,
    run,
    summarize,
    sweep_v,
    verify_drift_bound,
    write_metrics_csv,
    write_summary_csv,
)
from .solvers import (
    CostExtremes,
    EquilibriumCertificate,
    MarkovConfig,
    SolveResult,
    approximation_ratio_bound,
    baseline_always_nearest,
    baseline_greedy_k,
    baseline_no_migration,
    baseline_velocity_greedy,
    best_response,
    best_response_search,
    brute_force_solve,
    detailed_balance_residual,
    markov_gap_bound,
    markov_search,
    markov_transition_distribution,
    per_user_cost_bound,
    stationary_distribution,
    verify_nash,
)

__version__ = "0.1.0"
