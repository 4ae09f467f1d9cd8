"""Shared fixtures and independent oracles.

The naive evaluators below recompute costs from first principles with plain
Python loops; solver tests compare the production implementations against
them rather than against themselves.
"""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from edgeplace.lyapunov import LyapunovParams, SlotProblem
from edgeplace.model import SlotCostMatrices


def naive_objective(assignment, problem) -> float:
    """Per-slot objective recomputed with explicit loops (no bincount, no dot)."""
    a = list(int(x) for x in assignment)
    n, m = problem.n, problem.m
    loads = [0] * m
    for c in a:
        loads[c] += 1
    total = 0.0
    for k in range(n):
        c = a[k]
        total += problem.v * problem.requests[k] * loads[c] / problem.capacities[c]
        total += problem.v * problem.comm_delay[k][c]
        total += problem.migration_penalty[k][c]
    return total


def naive_best_profile(problem):
    """Second exhaustive enumeration: best (objective, assignment) pair."""
    best = None
    best_assignment = None
    for prof in itertools.product(range(problem.m), repeat=problem.n):
        u = naive_objective(prof, problem)
        if best is None or u < best:
            best = u
            best_assignment = prof
    return best, best_assignment


def naive_user_cost(assignment, problem, k: int) -> float:
    a = list(int(x) for x in assignment)
    loads = [0] * problem.m
    for c in a:
        loads[c] += 1
    c = a[k]
    return (
        problem.v * problem.requests[k] * loads[c] / problem.capacities[c]
        + problem.v * problem.comm_delay[k][c]
        + problem.migration_penalty[k][c]
    )


def make_problem(
    requests,
    capacities,
    comm,
    migration=None,
    prev=None,
    q: float = 0.0,
    v: float = 1.0,
    e_avg: float = 1.0,
    e_max: float = 100.0,
) -> SlotProblem:
    """Assemble a slot problem from explicit arrays (zero migration by default)."""
    requests = np.asarray(requests, dtype=float)
    capacities = np.asarray(capacities, dtype=float)
    comm = np.asarray(comm, dtype=float)
    n, m = comm.shape
    if migration is None:
        migration = np.zeros((n, m, m))
    else:
        migration = np.asarray(migration, dtype=float)
    if prev is None:
        prev = np.zeros(n, dtype=np.int64)
    matrices = SlotCostMatrices(comm_delay=comm, migration=migration)
    params = LyapunovParams(v=v, e_avg=e_avg, e_max=e_max)
    return SlotProblem.build(matrices, requests, prev, q, params, capacities)


@pytest.fixture
def tiny_grid():
    from edgeplace.model import GridMap

    return GridMap(width_cells=3, height_cells=3)
