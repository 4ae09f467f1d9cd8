"""Per-slot user positions: seeded waypoint motion on the grid, or trace files.

All randomness in the package flows through :class:`SplitMix64` so a scenario
seed reproduces runs bit-for-bit. Each consumer (user motion, demands,
perturbations, per-slot policy randomness) draws from its own substream, so
streams never depend on policy decisions and compared policies see identical
inputs under a shared seed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, TraceFormatError
from .model import GridMap, PERTURBATION_RANGE, UserState

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix64(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


class SplitMix64:
    """Tiny seedable generator with a fixed, documented update rule.

    State advances by the 64-bit golden-ratio increment; outputs are the state
    passed through two xorshift-multiply rounds. Floats take the top 53 bits.
    """

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK
        return _mix64(self._state)

    def random(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def randrange(self, n: int) -> int:
        if n <= 0:
            raise DomainError("randrange needs a positive bound")
        return self.next_u64() % n

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randrange(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample_indices(self, n: int, k: int) -> list[int]:
        """First k entries of a Fisher-Yates shuffle of range(n)."""
        idx = list(range(n))
        self.shuffle(idx)
        return idx[:k]


def substream_seed(master_seed: int, *tags: int) -> int:
    """Derive an independent substream seed from the master seed and integer tags."""
    s = master_seed & _MASK
    for t in tags:
        s = _mix64(s ^ _mix64(((t + 1) * _GOLDEN) & _MASK))
    return s


def spawn(master_seed: int, *tags: int) -> SplitMix64:
    return SplitMix64(substream_seed(master_seed, *tags))


def draw_perturbation(rng: SplitMix64) -> float:
    """One multiplicative delay/cost perturbation, uniform over its range."""
    return rng.uniform(*PERTURBATION_RANGE)


@dataclass(frozen=True)
class MobilityConfig:
    pedestrian_fraction: float = 6 / 7
    pedestrian_speed_range: tuple[float, float] = (0.5, 1.5)
    driver_speed_range: tuple[float, float] = (2.7, 11.1)
    slot_length_s: float = 300.0

    def __post_init__(self):
        if not 0.0 <= self.pedestrian_fraction <= 1.0:
            raise DomainError("pedestrian_fraction must lie in [0, 1]")
        for lo, hi in (self.pedestrian_speed_range, self.driver_speed_range):
            if lo <= 0 or hi < lo:
                raise DomainError("speed ranges must be positive and ordered")
        if self.slot_length_s <= 0:
            raise DomainError("slot_length_s must be positive")


def synthesize_users(
    n: int, grid: GridMap, config: MobilityConfig, rng: SplitMix64
) -> list[UserState]:
    """Draw n users uniformly over the map with kind-dependent speeds.

    Per user the draw order is fixed: x, y, kind, speed, waypoint x, waypoint y.
    """
    if n < 1:
        raise DomainError("need at least one user")
    users = []
    for k in range(n):
        x = rng.uniform(0.0, grid.width_m)
        y = rng.uniform(0.0, grid.height_m)
        pedestrian = rng.random() < config.pedestrian_fraction
        lo, hi = (
            config.pedestrian_speed_range if pedestrian else config.driver_speed_range
        )
        speed = rng.uniform(lo, hi)
        wx = rng.uniform(0.0, grid.width_m)
        wy = rng.uniform(0.0, grid.height_m)
        users.append(
            UserState(
                index=k,
                position_m=(x, y),
                speed_m_per_s=speed,
                kind="pedestrian" if pedestrian else "driver",
                waypoint_m=(wx, wy),
            )
        )
    return users


def step_user(
    user: UserState, grid: GridMap, slot_length_s: float, rng: SplitMix64
) -> UserState:
    """Advance one user by one slot of straight-line waypoint motion.

    Travel budget is speed * slot length; reaching the waypoint mid-slot draws
    a fresh uniform waypoint and continues with the residual distance.
    """
    x, y = user.position_m
    wx, wy = user.waypoint_m
    budget = user.speed_m_per_s * slot_length_s
    redraws = 0
    while budget > 1e-12:
        dx, dy = wx - x, wy - y
        dist = math.hypot(dx, dy)
        if dist <= budget:
            x, y = wx, wy
            budget -= dist
            wx = rng.uniform(0.0, grid.width_m)
            wy = rng.uniform(0.0, grid.height_m)
            redraws += 1
            if redraws > 10000:  # cannot happen with uniform draws; belt and braces
                break
        else:
            x += dx * (budget / dist)
            y += dy * (budget / dist)
            budget = 0.0
    x = min(max(x, 0.0), grid.width_m)
    y = min(max(y, 0.0), grid.height_m)
    return replace(user, position_m=(x, y), waypoint_m=(wx, wy))


@dataclass(frozen=True)
class Trace:
    """Externally supplied positions, one per (slot, user)."""

    positions: np.ndarray  # (horizon, N, 2)
    horizon: int
    n_users: int


TRACE_HEADER = ["slot", "user", "x_m", "y_m"]


def load_trace(path: str, grid: GridMap) -> Trace:
    """Parse and validate a trace CSV (header ``slot,user,x_m,y_m``)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceFormatError(f"{path}: no rows") from None
        if header != TRACE_HEADER:
            raise TraceFormatError(
                f"{path}: expected header {','.join(TRACE_HEADER)}, got {','.join(header)}"
            )
        entries: dict[tuple[int, int], tuple[float, float]] = {}
        max_slot = -1
        max_user = -1
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise TraceFormatError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                slot, user = int(row[0]), int(row[1])
                x, y = float(row[2]), float(row[3])
            except ValueError:
                raise TraceFormatError(f"{path}:{lineno}: malformed row {row!r}") from None
            if slot < 0 or user < 0:
                raise TraceFormatError(f"{path}:{lineno}: negative slot or user id")
            if not grid.contains((x, y)):
                raise TraceFormatError(
                    f"{path}:{lineno}: position ({x}, {y}) outside map bounds"
                )
            if (slot, user) in entries:
                raise TraceFormatError(f"{path}:{lineno}: duplicate (slot, user) pair")
            entries[(slot, user)] = (x, y)
            max_slot = max(max_slot, slot)
            max_user = max(max_user, user)
    if not entries:
        raise TraceFormatError(f"{path}: no rows")
    horizon, n_users = max_slot + 1, max_user + 1
    positions = np.empty((horizon, n_users, 2), dtype=float)
    for slot in range(horizon):
        for user in range(n_users):
            if (slot, user) not in entries:
                raise TraceFormatError(f"{path}: missing entry for slot {slot}, user {user}")
            positions[slot, user] = entries[(slot, user)]
    return Trace(positions=positions, horizon=horizon, n_users=n_users)
