"""Random single-slot problem generators for oracle suites and property checks.

Two families:

* grid problems — users dropped on a real map with the production cost
  formulas, paper-scale demands and capacities; exercise the placement game
  (equilibria, move bounds, ratio bounds) in the regime the simulator runs in;
* unit problems — synthetic cost matrices with O(1) spreads, keeping softmax
  weights representable for stationary-distribution and reversibility checks
  at large inverse temperatures.
"""

from __future__ import annotations

import numpy as np

from .lyapunov import LyapunovParams, SlotProblem
from .mobility import SplitMix64
from .model import (
    GridMap,
    SlotCostMatrices,
    attachment_nodes,
    build_cost_matrices,
)

PAPER_DEMAND_RANGE = (1.584e9, 2.64e9)
PAPER_CAPACITY = 25e9
REFERENCE_DEMAND = 2.112e9


def random_grid_problem(
    rng: SplitMix64,
    n: int,
    m: int,
    v: float = 1.0,
    q_max: float = 100.0,
) -> SlotProblem:
    """Single-slot instance on a 1 x m grid with production cost formulas."""
    grid = GridMap(width_cells=m, height_cells=1)
    positions = np.array(
        [[rng.uniform(0.0, grid.width_m), rng.uniform(0.0, grid.height_m)] for _ in range(n)]
    )
    attachments = attachment_nodes(positions, grid)
    requests = np.array([rng.uniform(*PAPER_DEMAND_RANGE) for _ in range(n)])
    u_comm = np.array([rng.uniform(1.0, 1.35) for _ in range(n)])
    u_mig = np.array([rng.uniform(1.0, 1.35) for _ in range(n)])
    matrices = build_cost_matrices(
        grid, attachments, u_comm, u_mig, requests / REFERENCE_DEMAND
    )
    prev = np.array([rng.randrange(m) for _ in range(n)], dtype=np.int64)
    q = rng.uniform(0.0, q_max)
    params = LyapunovParams(v=v, e_avg=1.0, e_max=1e4)
    caps = np.full(m, PAPER_CAPACITY)
    return SlotProblem.build(matrices, requests, prev, q, params, caps)


def random_unit_problem(rng: SplitMix64, n: int, m: int, q_max: float = 0.5) -> SlotProblem:
    """Synthetic instance with O(1) cost spreads; positive minimum comm delay."""
    requests = np.array([rng.uniform(0.5, 1.5) for _ in range(n)])
    caps = np.array([rng.uniform(5.0, 15.0) for _ in range(m)])
    comm = np.array([[rng.uniform(0.05, 2.0) for _ in range(m)] for _ in range(n)])
    migration = np.zeros((n, m, m))
    for k in range(n):
        for j in range(m):
            for i in range(m):
                if i != j:
                    migration[k, j, i] = rng.uniform(0.1, 2.0)
    matrices = SlotCostMatrices(comm_delay=comm, migration=migration)
    prev = np.array([rng.randrange(m) for _ in range(n)], dtype=np.int64)
    q = rng.uniform(0.0, q_max)
    params = LyapunovParams(v=1.0, e_avg=1.0, e_max=100.0)
    return SlotProblem.build(matrices, requests, prev, q, params, caps)
