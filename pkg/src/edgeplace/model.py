"""Physical world model: grid of edge nodes, users, and all per-slot cost formulas.

Conventions used throughout the package:

* positions are continuous ``(x, y)`` metres, node cells are ``(row, col)``,
  node indices are row-major over the grid;
* demands are CPU cycles per slot, delays are seconds, migration costs are
  abstract cost units;
* a placement assigns every user's service to exactly one node, encoded as an
  integer vector ``assignment[k] = node index``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

PROCESSING_DENSITY_CYCLES_PER_BIT = 2640.0
DEMAND_RATE_RANGE_BPS = (0.6e6, 1.0e6)
#: demand at which the fixed part of a migration costs exactly its base value
REFERENCE_DEMAND_CYCLES = 0.8e6 * PROCESSING_DENSITY_CYCLES_PER_BIT
PERTURBATION_RANGE = (1.0, 1.35)
HOP_MIGRATION_COST = 1.0
MIGRATION_FIXED_COST = 0.5
DEFAULT_NODE_CAPACITY = 25e9
DEFAULT_CELL_SIZE_M = 500.0
DEFAULT_HOP_DELAY_S = 36.0


@dataclass(frozen=True)
class GridMap:
    """Rectangular service area split into square cells, one edge node per cell."""

    width_cells: int
    height_cells: int
    cell_size_m: float = DEFAULT_CELL_SIZE_M
    hop_delay_s: float = DEFAULT_HOP_DELAY_S

    def __post_init__(self):
        if self.width_cells < 1 or self.height_cells < 1:
            raise DomainError("grid must have at least one cell per axis")
        if self.cell_size_m <= 0:
            raise DomainError("cell_size_m must be positive")
        if self.hop_delay_s < 0:
            raise DomainError("hop_delay_s must be non-negative")

    @property
    def node_count(self) -> int:
        return self.width_cells * self.height_cells

    @property
    def width_m(self) -> float:
        return self.width_cells * self.cell_size_m

    @property
    def height_m(self) -> float:
        return self.height_cells * self.cell_size_m

    def node_of_cell(self, row: int, col: int) -> int:
        return row * self.width_cells + col

    def cell_of_node(self, index: int) -> tuple[int, int]:
        return divmod(index, self.width_cells)

    def contains(self, position_m) -> bool:
        x, y = position_m
        return 0.0 <= x <= self.width_m and 0.0 <= y <= self.height_m

    @property
    def diameter_hops(self) -> int:
        return (self.width_cells - 1) + (self.height_cells - 1)


@dataclass(frozen=True)
class MecNode:
    """One edge server; ``capacity_cycles_per_s`` is shared equally by its users."""

    index: int
    cell: tuple[int, int]
    capacity_cycles_per_s: float = DEFAULT_NODE_CAPACITY

    def __post_init__(self):
        if self.capacity_cycles_per_s <= 0:
            raise DomainError("node capacity must be positive")


def make_nodes(grid: GridMap, capacity: float = DEFAULT_NODE_CAPACITY) -> tuple[MecNode, ...]:
    """One node per cell, indexed row-major, all with the same capacity."""
    return tuple(
        MecNode(index=i, cell=grid.cell_of_node(i), capacity_cycles_per_s=capacity)
        for i in range(grid.node_count)
    )


def capacities_array(nodes) -> np.ndarray:
    return np.array([n.capacity_cycles_per_s for n in nodes], dtype=float)


@dataclass(frozen=True)
class UserState:
    """A mobile user: current position, fixed speed, and current waypoint."""

    index: int
    position_m: tuple[float, float]
    speed_m_per_s: float
    kind: str  # "pedestrian" | "driver"
    waypoint_m: tuple[float, float]

    def __post_init__(self):
        if self.speed_m_per_s < 0:
            raise DomainError("speed must be non-negative")
        if self.kind not in ("pedestrian", "driver"):
            raise DomainError(f"unknown user kind {self.kind!r}")


@dataclass(frozen=True)
class ServiceRequest:
    """Per-slot computing demand of one user, in CPU cycles."""

    user: int
    demand_cycles: float

    def __post_init__(self):
        if self.demand_cycles <= 0:
            raise DomainError("demand_cycles must be positive")


def demand_cycles_from_rate(bits_per_s: float) -> float:
    """Cycles requested in one slot by a stream at the given bit rate."""
    return bits_per_s * PROCESSING_DENSITY_CYCLES_PER_BIT


@dataclass(frozen=True)
class PlacementProfile:
    """Assignment of each user's service to one node; index k holds user k's node."""

    nodes: tuple[int, ...]

    @classmethod
    def from_array(cls, assignment) -> "PlacementProfile":
        return cls(tuple(int(c) for c in assignment))

    def as_array(self) -> np.ndarray:
        return np.array(self.nodes, dtype=np.int64)

    def validate(self, node_count: int) -> None:
        for c in self.nodes:
            if not 0 <= c < node_count:
                raise DomainError(f"node index {c} outside [0, {node_count})")

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class SlotCostMatrices:
    """Per-slot realized cost inputs.

    ``comm_delay[k, i]`` is user k's communication delay when served by node i
    (seconds); ``migration[k, j, i]`` is the cost of moving user k's service
    from node j to node i (zero on the diagonal).
    """

    comm_delay: np.ndarray  # (N, M)
    migration: np.ndarray  # (N, M, M)

    def validate(self) -> None:
        if (self.comm_delay < 0).any() or (self.migration < 0).any():
            raise DomainError("cost matrices must be non-negative")
        n, m = self.comm_delay.shape
        diag = self.migration[:, np.arange(m), np.arange(m)]
        if diag.any():
            raise DomainError("migration cost of staying put must be zero")


@dataclass(frozen=True)
class DelayBreakdown:
    computing_s: float
    communication_s: float

    def __post_init__(self):
        if self.computing_s < 0 or self.communication_s < 0:
            raise DomainError("delays must be non-negative")

    @property
    def total_s(self) -> float:
        return self.computing_s + self.communication_s


def attachment_cell(position_m, grid: GridMap) -> tuple[int, int]:
    """Cell containing the position; points on the far edge clamp to the last cell."""
    x, y = position_m
    if not grid.contains(position_m):
        raise DomainError(f"position {position_m} outside map bounds")
    row = min(int(y // grid.cell_size_m), grid.height_cells - 1)
    col = min(int(x // grid.cell_size_m), grid.width_cells - 1)
    return row, col


def attachment_node(position_m, grid: GridMap) -> int:
    return grid.node_of_cell(*attachment_cell(position_m, grid))


def attachment_nodes(positions: np.ndarray, grid: GridMap) -> np.ndarray:
    """Vectorized attachment for an (N, 2) position array."""
    if (positions < 0).any() or (positions[:, 0] > grid.width_m).any() or (
        positions[:, 1] > grid.height_m
    ).any():
        raise DomainError("position outside map bounds")
    col = np.minimum((positions[:, 0] // grid.cell_size_m).astype(np.int64), grid.width_cells - 1)
    row = np.minimum((positions[:, 1] // grid.cell_size_m).astype(np.int64), grid.height_cells - 1)
    return row * grid.width_cells + col


def hop_distance(cell_a: tuple[int, int], cell_b: tuple[int, int]) -> int:
    """Manhattan distance between two cells, in hops."""
    return abs(cell_a[0] - cell_b[0]) + abs(cell_a[1] - cell_b[1])


def hop_matrix(grid: GridMap) -> np.ndarray:
    """(M, M) hop distances between all node pairs."""
    rows, cols = np.divmod(np.arange(grid.node_count), grid.width_cells)
    return np.abs(rows[:, None] - rows[None, :]) + np.abs(cols[:, None] - cols[None, :])


def node_loads(assignment, node_count: int) -> np.ndarray:
    """Number of users served by each node under the assignment."""
    a = np.asarray(assignment, dtype=np.int64)
    return np.bincount(a, minlength=node_count)


def computing_delay(k: int, assignment, requests, capacities) -> float:
    """Seconds user k waits for compute: demand times the sharing factor of its node."""
    a = np.asarray(assignment, dtype=np.int64)
    loads = node_loads(a, len(capacities))
    c = a[k]
    return float(requests[k] * loads[c] / capacities[c])


def communication_delay(position_m, node_index: int, grid: GridMap, u: float) -> float:
    """Seconds of network delay from the user's attachment cell to the serving node."""
    lo, hi = PERTURBATION_RANGE
    if not lo <= u <= hi:
        raise DomainError(f"perturbation {u} outside [{lo}, {hi}]")
    hops = hop_distance(attachment_cell(position_m, grid), grid.cell_of_node(node_index))
    return hops * grid.hop_delay_s * u


def migration_cost_entry(
    source: int, dest: int, grid: GridMap, u: float, demand_factor: float
) -> float:
    """Cost of moving one service: per-hop cost plus a demand-scaled fixed part."""
    if source == dest:
        return 0.0
    hops = hop_distance(grid.cell_of_node(source), grid.cell_of_node(dest))
    return (hops * HOP_MIGRATION_COST + MIGRATION_FIXED_COST * demand_factor) * u


def slot_migration_cost(prev_assignment, assignment, migration: np.ndarray) -> float:
    """Total cost of all service moves between two consecutive placements."""
    prev = np.asarray(prev_assignment, dtype=np.int64)
    cur = np.asarray(assignment, dtype=np.int64)
    if prev.shape != cur.shape:
        raise DomainError("placements must cover the same users")
    return float(migration[np.arange(len(cur)), prev, cur].sum())


def build_cost_matrices(
    grid: GridMap,
    attachments: np.ndarray,
    comm_perturbation: np.ndarray,
    migration_perturbation: np.ndarray,
    demand_factors: np.ndarray,
    hops: np.ndarray | None = None,
) -> SlotCostMatrices:
    """Realize one slot's cost matrices from attachments and perturbation draws."""
    if hops is None:
        hops = hop_matrix(grid)
    m = grid.node_count
    comm = hops[attachments, :] * grid.hop_delay_s * comm_perturbation[:, None]
    base = hops[None, :, :] * HOP_MIGRATION_COST + (
        MIGRATION_FIXED_COST * demand_factors[:, None, None]
    ) * (1.0 - np.eye(m))[None, :, :]
    migration = migration_perturbation[:, None, None] * base
    return SlotCostMatrices(comm_delay=comm, migration=migration)
