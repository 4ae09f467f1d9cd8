"""Virtual cost queue and the per-slot placement objective.

The long-term migration budget is enforced through a virtual queue that
accumulates spending above the per-slot budget. Each slot the controller
minimizes ``U(c) = sum_k [ v * T_k(c) + Q * E_k(prev -> c_k) ]`` — weighted
latency plus the queue-scaled migration charge. Profile-independent constants
are dropped from U; solvers only ever compare U values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .model import PERTURBATION_RANGE, GridMap, MIGRATION_FIXED_COST, SlotCostMatrices


def queue_update(q, e_t, e_avg):
    """Next queue length: max(q + e_t - e_avg, 0).

    Works unchanged for int, Fraction and float operands.
    """
    if q < 0 or e_t < 0:
        raise DomainError("queue length and slot cost must be non-negative")
    if e_avg <= 0:
        raise DomainError("per-slot budget must be positive")
    nxt = q + e_t - e_avg
    return nxt if nxt > 0 else 0


def lyapunov_value(q):
    """Scalar congestion measure of the cost queue: q^2 / 2."""
    if q < 0:
        raise DomainError("queue length must be non-negative")
    return q * q / 2


def drift_bound_constant(e_avg, e_max):
    """The constant bounding the one-slot quadratic drift: (e_avg^2 + e_max^2) / 2."""
    if e_avg < 0 or e_max < 0:
        raise DomainError("budget and worst-case cost must be non-negative")
    return (e_avg * e_avg + e_max * e_max) / 2


def worst_case_slot_cost(
    grid: GridMap, n_users: int, max_demand_factor: float = 1.25
) -> float:
    """A priori bound on any slot's total migration cost.

    Every user pays at most the map-diameter move plus the demand-scaled fixed
    part, at the worst perturbation. Constant over a run by construction.
    """
    per_user = grid.diameter_hops + MIGRATION_FIXED_COST * max_demand_factor
    return n_users * per_user * PERTURBATION_RANGE[1]


@dataclass(frozen=True)
class LyapunovParams:
    """Control knobs of the online policy: penalty weight, budget, drift constant."""

    v: float
    e_avg: float
    e_max: float

    def __post_init__(self):
        if self.v < 0:
            raise DomainError("v must be non-negative")
        if self.e_avg <= 0:
            raise DomainError("e_avg must be positive")
        if self.e_max < 0:
            raise DomainError("e_max must be non-negative")

    @property
    def b(self) -> float:
        return drift_bound_constant(self.e_avg, self.e_max)


class VirtualQueue:
    """Migration-cost debt above the budget; starts empty, never negative."""

    def __init__(self):
        self.length = 0.0
        self.history = [0.0]

    def update(self, e_t: float, e_avg: float) -> float:
        self.length = float(queue_update(self.length, e_t, e_avg))
        self.history.append(self.length)
        return self.length


@dataclass(frozen=True)
class SlotProblem:
    """Everything needed to score one slot's candidate placements.

    ``migration_penalty[k, i]`` is the queue-scaled charge for serving user k
    at node i this slot given its previous node; ``unary_cost`` folds it with
    the weighted communication delay so solvers touch a single (N, M) array.
    """

    v: float
    q: float
    requests: np.ndarray  # (N,)
    capacities: np.ndarray  # (M,)
    comm_delay: np.ndarray  # (N, M)
    migration: np.ndarray  # (N, M, M)
    prev_assignment: np.ndarray  # (N,)
    migration_penalty: np.ndarray  # (N, M)
    unary_cost: np.ndarray  # (N, M)
    params: LyapunovParams

    @classmethod
    def build(
        cls,
        matrices: SlotCostMatrices,
        requests: np.ndarray,
        prev_assignment,
        queue_length: float,
        params: LyapunovParams,
        capacities: np.ndarray,
    ) -> "SlotProblem":
        prev = np.asarray(prev_assignment, dtype=np.int64)
        n = len(requests)
        penalty = queue_length * matrices.migration[np.arange(n), prev, :]
        unary = params.v * matrices.comm_delay + penalty
        return cls(
            v=params.v,
            q=float(queue_length),
            requests=np.asarray(requests, dtype=float),
            capacities=np.asarray(capacities, dtype=float),
            comm_delay=matrices.comm_delay,
            migration=matrices.migration,
            prev_assignment=prev,
            migration_penalty=penalty,
            unary_cost=unary,
            params=params,
        )

    @property
    def n(self) -> int:
        return len(self.requests)

    @property
    def m(self) -> int:
        return len(self.capacities)


def slot_objective(assignment, problem: SlotProblem) -> float:
    """Total per-slot cost U of a placement.

    The compute term couples users on a node: each node contributes
    v * N_i * (sum of demands on i) / F_i.
    """
    a = np.asarray(assignment, dtype=np.int64)
    loads = np.bincount(a, minlength=problem.m)
    demand_sums = np.bincount(a, weights=problem.requests, minlength=problem.m)
    node_term = problem.v * float(np.dot(loads, demand_sums / problem.capacities))
    unary = float(problem.unary_cost[np.arange(problem.n), a].sum())
    return node_term + unary


def user_cost_vector(
    problem: SlotProblem, assignment: np.ndarray, k: int, loads: np.ndarray
) -> np.ndarray:
    """User k's own cost at each candidate node, all other users fixed."""
    occupancy = loads + 1
    occupancy[assignment[k]] -= 1  # k already counted on its current node
    return (
        problem.v * problem.requests[k] * occupancy / problem.capacities
        + problem.unary_cost[k]
    )


def user_cost(problem: SlotProblem, assignment: np.ndarray, k: int) -> float:
    """User k's realized cost under the assignment."""
    loads = np.bincount(assignment, minlength=problem.m)
    c = assignment[k]
    return float(
        problem.v * problem.requests[k] * loads[c] / problem.capacities[c]
        + problem.unary_cost[k, c]
    )


def pathwise_drift_check(
    q_t: float,
    q_next: float,
    e_t: float,
    sum_latency_s: float,
    params: LyapunovParams,
    slack: float = 1e-9,
) -> bool:
    """One executed slot must satisfy the quadratic drift bound.

    Checks (q_next^2 - q_t^2) / 2 <= b + q_t * (e_t - e_avg) + slack.
    The weighted-latency term appears on both sides of the drift-plus-penalty
    bound and cancels, so ``sum_latency_s`` does not enter the inequality; it
    is kept in the signature because callers hand over the whole slot record.
    """
    del sum_latency_s
    lhs = (q_next * q_next - q_t * q_t) / 2
    rhs = params.b + q_t * (e_t - params.e_avg)
    return lhs <= rhs + slack
