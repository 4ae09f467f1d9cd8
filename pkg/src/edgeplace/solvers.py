"""Per-slot placement solvers: exact oracle, softmax chain search, best response.

Three minimizers for the per-slot objective plus the greedy baselines they are
compared against:

* :func:`brute_force_solve` — exact minimum over all ``M^N`` placements, used
  as the oracle at small scale;
* :func:`markov_search` — a single-move Markov chain that samples a user and
  re-places it with probability proportional to ``exp(-beta/2 * U)`` over the
  candidate nodes, keeping the best placement seen;
* :func:`best_response_search` — round-robin best-response dynamics, certified
  at termination by an exhaustive unilateral-deviation scan.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvariantViolation, SizeCapError
from .lyapunov import SlotProblem, slot_objective, user_cost_vector
from .mobility import SplitMix64
from .model import PlacementProfile

DEFAULT_ENUMERATION_CAP = 2**20


@dataclass(frozen=True)
class MarkovConfig:
    """Chain parameters: inverse temperature, iteration budget, RNG seed."""

    beta: float
    iterations: int
    seed: int

    def __post_init__(self):
        if self.beta <= 0:
            raise DomainError("beta must be positive")
        if self.iterations < 0:
            raise DomainError("iterations must be non-negative")


@dataclass(frozen=True)
class SolverStats:
    """Work performed: chain iterations / sweep rounds, and executed moves."""

    iterations: int
    moves: int


@dataclass(frozen=True)
class SolveResult:
    profile: PlacementProfile
    objective: float
    stats: SolverStats


@dataclass(frozen=True)
class EquilibriumCertificate:
    """Outcome of best-response dynamics plus its verification scan."""

    is_nash: bool
    total_moves: int
    rounds: int
    move_log: tuple = ()  # (round, user, from_node, to_node) per executed move


def _result(assignment: np.ndarray, problem: SlotProblem, iterations: int, moves: int) -> SolveResult:
    return SolveResult(
        profile=PlacementProfile.from_array(assignment),
        objective=slot_objective(assignment, problem),
        stats=SolverStats(iterations=iterations, moves=moves),
    )


def profile_space_size(m: int, n: int) -> int:
    return m**n


def profile_costs(problem: SlotProblem, cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
    """Objective of every placement, in lexicographic order (user 0 most significant)."""
    n, m = problem.n, problem.m
    total = profile_space_size(m, n)
    if total > cap:
        raise SizeCapError(f"{m}^{n} = {total} placements exceeds cap {cap}")
    shape = (m,) * n
    users = np.arange(n)
    out = np.empty(total, dtype=float)
    chunk = 1 << 16
    for lo in range(0, total, chunk):
        hi = min(lo + chunk, total)
        prof = np.stack(np.unravel_index(np.arange(lo, hi), shape), axis=1)
        b = hi - lo
        rows = np.repeat(np.arange(b), n)
        cols = prof.ravel()
        loads = np.zeros((b, m))
        np.add.at(loads, (rows, cols), 1.0)
        demand = np.zeros((b, m))
        np.add.at(demand, (rows, cols), np.broadcast_to(problem.requests, (b, n)).ravel())
        node_term = problem.v * ((loads * demand) / problem.capacities).sum(axis=1)
        unary = problem.unary_cost[users[None, :], prof].sum(axis=1)
        out[lo:hi] = node_term + unary
    return out


def assignment_from_rank(rank: int, m: int, n: int) -> np.ndarray:
    """Inverse of the lexicographic enumeration order used by profile_costs."""
    return np.array(np.unravel_index(rank, (m,) * n), dtype=np.int64)


def brute_force_solve(problem: SlotProblem, cap: int = DEFAULT_ENUMERATION_CAP) -> SolveResult:
    """Exact minimizer over all placements; ties go to the smallest assignment."""
    costs = profile_costs(problem, cap=cap)
    best = int(np.argmin(costs))  # first occurrence = lexicographically smallest
    assignment = assignment_from_rank(best, problem.m, problem.n)
    return _result(assignment, problem, iterations=len(costs), moves=0)


def stationary_distribution(
    problem: SlotProblem, beta: float, cap: int = DEFAULT_ENUMERATION_CAP
) -> np.ndarray:
    """Exact softmax over all placements: p(c) proportional to exp(-beta * U(c))."""
    if beta < 0:
        raise DomainError("beta must be non-negative")
    costs = profile_costs(problem, cap=cap)
    w = np.exp(-beta * (costs - costs.min()))
    return w / w.sum()


def markov_gap_bound(beta: float, m: int, n: int) -> float:
    """Upper bound on the softmax expected cost above the optimum: n*ln(m)/beta."""
    if beta <= 0:
        raise DomainError("beta must be positive")
    return n * math.log(m) / beta


def _move_deltas(
    problem: SlotProblem,
    assignment: np.ndarray,
    k: int,
    loads: np.ndarray,
    demand_sums: np.ndarray,
) -> np.ndarray:
    """Objective change from moving user k to each node (zero at its current node)."""
    r = problem.requests[k]
    a = assignment[k]
    f = problem.capacities
    removed = ((loads[a] - 1.0) * (demand_sums[a] - r) - loads[a] * demand_sums[a]) / f[a]
    added = ((loads + 1.0) * (demand_sums + r) - loads * demand_sums) / f
    deltas = problem.v * (removed + added) + problem.unary_cost[k] - problem.unary_cost[k, a]
    deltas[a] = 0.0
    return deltas


def markov_transition_distribution(
    problem: SlotProblem, profile, k: int, beta: float
) -> np.ndarray:
    """Probability of re-placing user k on each node.

    Weights are exp(-beta/2 * U(c')) over the M single-user candidates, so the
    ratio between any two targets a, b is exp(-beta/2 * (U_a - U_b)); beta = 0
    collapses to the uniform distribution.
    """
    if beta < 0:
        raise DomainError("beta must be non-negative")
    assignment = np.asarray(profile, dtype=np.int64)
    loads = np.bincount(assignment, minlength=problem.m).astype(float)
    demand_sums = np.bincount(assignment, weights=problem.requests, minlength=problem.m)
    deltas = _move_deltas(problem, assignment, k, loads, demand_sums)
    w = np.exp(-0.5 * beta * (deltas - deltas.min()))
    return w / w.sum()


def markov_search(problem: SlotProblem, config: MarkovConfig) -> SolveResult:
    """Run the single-move chain from a random placement; return the best seen.

    Each iteration picks a user uniformly at random and samples its node from
    :func:`markov_transition_distribution`. With zero iterations the initial
    random placement is returned unchanged.
    """
    rng = SplitMix64(config.seed)
    n, m = problem.n, problem.m
    assignment = np.array([rng.randrange(m) for _ in range(n)], dtype=np.int64)
    loads = np.bincount(assignment, minlength=m).astype(float)
    demand_sums = np.bincount(assignment, weights=problem.requests, minlength=m)
    current = slot_objective(assignment, problem)
    best_assignment = assignment.copy()
    best = current
    moves = 0
    half_beta = 0.5 * config.beta
    for it in range(config.iterations):
        k = rng.randrange(n)
        deltas = _move_deltas(problem, assignment, k, loads, demand_sums)
        w = np.exp(-half_beta * (deltas - deltas.min()))
        cum = np.cumsum(w)
        target = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
        if target >= m:
            target = m - 1
        a = assignment[k]
        if target != a:
            r = problem.requests[k]
            loads[a] -= 1.0
            loads[target] += 1.0
            demand_sums[a] -= r
            demand_sums[target] += r
            assignment[k] = target
            current += deltas[target]
            moves += 1
            if (moves & 0xFFF) == 0:
                current = slot_objective(assignment, problem)  # shed float drift
            if current < best:
                best = current
                best_assignment = assignment.copy()
    return _result(best_assignment, problem, iterations=config.iterations, moves=moves)


def best_response(k: int, profile, problem: SlotProblem, loads: np.ndarray | None = None) -> int:
    """Node minimizing user k's own cost with everyone else fixed; ties to lowest index."""
    assignment = np.asarray(profile, dtype=np.int64)
    if loads is None:
        loads = np.bincount(assignment, minlength=problem.m)
    costs = user_cost_vector(problem, assignment, k, loads)
    return int(np.argmin(costs))


def best_response_move_bound(m: int, n: int) -> int:
    return m * n * (n + 1) // 2


def best_response_search(
    problem: SlotProblem, initial_profile
) -> tuple[SolveResult, EquilibriumCertificate]:
    """Round-robin best-response dynamics until a full sweep makes no move.

    A user moves only when the candidate strictly lowers its own cost, so every
    executed move is a strict improvement. Termination is certified by an
    independent exhaustive deviation scan; the executed move count must stay
    within the m*n*(n+1)/2 bound or the game dynamics are broken.
    """
    assignment = np.asarray(initial_profile, dtype=np.int64).copy()
    n, m = problem.n, problem.m
    loads = np.bincount(assignment, minlength=m)
    bound = best_response_move_bound(m, n)
    moves = 0
    rounds = 0
    log = []
    while True:
        rounds += 1
        changed = False
        for k in range(n):
            costs = user_cost_vector(problem, assignment, k, loads)
            target = int(np.argmin(costs))
            a = assignment[k]
            if costs[target] < costs[a]:
                loads[a] -= 1
                loads[target] += 1
                assignment[k] = target
                moves += 1
                changed = True
                log.append((rounds, k, int(a), target))
                if moves > bound:
                    raise InvariantViolation(
                        f"best-response dynamics exceeded {bound} moves"
                    )
        if not changed:
            break
    is_nash = verify_nash(problem, assignment)
    result = _result(assignment, problem, iterations=rounds, moves=moves)
    cert = EquilibriumCertificate(
        is_nash=is_nash, total_moves=moves, rounds=rounds, move_log=tuple(log)
    )
    return result, cert


def verify_nash(problem: SlotProblem, assignment) -> bool:
    """Exhaustive scan: no user has a strictly improving unilateral deviation."""
    a = np.asarray(assignment, dtype=np.int64)
    loads = np.bincount(a, minlength=problem.m)
    for k in range(problem.n):
        costs = user_cost_vector(problem, a, k, loads)
        if costs.min() < costs[a[k]]:
            return False
    return True


@dataclass(frozen=True)
class CostExtremes:
    """Per-user and per-node extremes feeding the equilibrium cost bounds."""

    r_max: np.ndarray  # (N,)
    r_min: np.ndarray  # (N,)
    h_max: np.ndarray  # (N,)
    h_min: np.ndarray  # (N,)
    penalty_max: np.ndarray  # (N,)
    f_min: float
    f_max: float

    @classmethod
    def from_problem(cls, problem: SlotProblem) -> "CostExtremes":
        return cls(
            r_max=problem.requests.copy(),
            r_min=problem.requests.copy(),
            h_max=problem.comm_delay.max(axis=1),
            h_min=problem.comm_delay.min(axis=1),
            penalty_max=problem.migration_penalty.max(axis=1),
            f_min=float(problem.capacities.min()),
            f_max=float(problem.capacities.max()),
        )

    def merge(self, other: "CostExtremes") -> "CostExtremes":
        return CostExtremes(
            r_max=np.maximum(self.r_max, other.r_max),
            r_min=np.minimum(self.r_min, other.r_min),
            h_max=np.maximum(self.h_max, other.h_max),
            h_min=np.minimum(self.h_min, other.h_min),
            penalty_max=np.maximum(self.penalty_max, other.penalty_max),
            f_min=min(self.f_min, other.f_min),
            f_max=max(self.f_max, other.f_max),
        )


def per_user_cost_bound(k: int, problem: SlotProblem, extremes: CostExtremes) -> float:
    """Upper bound on user k's cost at any equilibrium of the placement game."""
    n, m = problem.n, problem.m
    return float(
        problem.v * extremes.r_max[k] * (m + n - 1) / (m * extremes.f_min)
        + problem.v * extremes.h_max[k]
        + extremes.penalty_max[k]
    )


def approximation_ratio_bound(problem: SlotProblem, extremes: CostExtremes) -> float:
    """Worst-equilibrium over optimum bound: worst user's cost cap over the
    sum of every user's smallest possible cost."""
    numerator = max(per_user_cost_bound(k, problem, extremes) for k in range(problem.n))
    denominator = float(
        (problem.v * extremes.r_min / extremes.f_max + problem.v * extremes.h_min).sum()
    )
    if denominator <= 0.0:
        raise DomainError("approximation ratio denominator is zero")
    return numerator / denominator


def detailed_balance_residual(
    problem: SlotProblem, beta: float, cap: int = DEFAULT_ENUMERATION_CAP
) -> float:
    """Max relative reversibility residual over all single-move placement pairs.

    For the softmax stationary law p and the difference-form transition kernel
    w(c -> c') = exp(-beta/2 * (U(c') - U(c))), checks p(c) w(c -> c') equals
    p(c') w(c' -> c) on every pair differing in one user's node. The kernel's
    global pacing constant cancels from the two sides.
    """
    costs = profile_costs(problem, cap=cap)
    p = np.exp(-beta * (costs - costs.min()))
    p /= p.sum()
    n, m = problem.n, problem.m
    total = len(costs)
    indices = np.arange(total)
    digits_cache = []
    for k in range(n):
        stride = m ** (n - 1 - k)
        digits_cache.append((stride, (indices // stride) % m))
    worst = 0.0
    for k in range(n):
        stride, digits = digits_cache[k]
        for d in range(m):
            base = indices[digits == d]
            if len(base) == 0:
                continue
            for t in range(d + 1, m):
                other = base + (t - d) * stride
                w_fwd = np.exp(-0.5 * beta * (costs[other] - costs[base]))
                lhs = p[base] * w_fwd
                rhs = p[other] / w_fwd
                scale = np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), 1e-300)
                worst = max(worst, float((np.abs(lhs - rhs) / scale).max()))
    return worst


def expected_cost(probabilities: np.ndarray, costs: np.ndarray) -> float:
    return float(np.dot(probabilities, costs))


# --- baselines -------------------------------------------------------------


def baseline_always_nearest(attachments: np.ndarray) -> np.ndarray:
    """Serve every user from the node it is attached to."""
    return np.asarray(attachments, dtype=np.int64).copy()


def baseline_no_migration(initial_assignment: np.ndarray) -> np.ndarray:
    """Keep the starting placement forever."""
    return np.asarray(initial_assignment, dtype=np.int64).copy()


def baseline_greedy_k(
    problem: SlotProblem,
    k_count: int,
    order: str,
    rng: SplitMix64 | None = None,
) -> np.ndarray:
    """Move k_count chosen users, one after another, to their own best node.

    ``order`` picks the users: "random" draws them without replacement,
    "descending_latency" takes the users currently suffering the worst total
    latency under the previous placement.
    """
    n = problem.n
    if not 0 <= k_count <= n:
        raise DomainError("k_count must lie in [0, n]")
    assignment = problem.prev_assignment.copy()
    loads = np.bincount(assignment, minlength=problem.m)
    if order == "random":
        if rng is None:
            raise DomainError("random order needs an RNG")
        chosen = rng.sample_indices(n, k_count)
    elif order == "descending_latency":
        prev = problem.prev_assignment
        latency = (
            problem.requests * loads[prev] / problem.capacities[prev]
            + problem.comm_delay[np.arange(n), prev]
        )
        chosen = list(np.argsort(-latency, kind="stable")[:k_count])
    else:
        raise DomainError(f"unknown order {order!r}")
    for k in chosen:
        costs = user_cost_vector(problem, assignment, int(k), loads)
        target = int(np.argmin(costs))
        a = assignment[k]
        if target != a:
            loads[a] -= 1
            loads[target] += 1
            assignment[k] = target
    return assignment


def baseline_velocity_greedy(
    problem: SlotProblem, predicted_comm_delay: np.ndarray
) -> np.ndarray:
    """Greedy per-user placement scored at each user's extrapolated position.

    Same sequential single-pass greedy as :func:`baseline_greedy_k` with k = n,
    except communication delay is taken from the predicted attachment.
    """
    assignment = problem.prev_assignment.copy()
    loads = np.bincount(assignment, minlength=problem.m)
    for k in range(problem.n):
        occupancy = loads + 1
        occupancy[assignment[k]] -= 1
        costs = (
            problem.v * problem.requests[k] * occupancy / problem.capacities
            + problem.v * predicted_comm_delay[k]
            + problem.migration_penalty[k]
        )
        target = int(np.argmin(costs))
        a = assignment[k]
        if target != a:
            loads[a] -= 1
            loads[target] += 1
            assignment[k] = target
    return assignment
