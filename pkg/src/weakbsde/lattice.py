"""Recombining binomial lattice with exact conditional expectations.

The lattice is the discrete stand-in for a Brownian filtration: level k
holds k + 1 nodes, the increment over one step is +/- sqrt(dt) with
probability 1/2 each, and every conditional expectation is the exact
half-sum of the two successor values.  Everything downstream (BSDE
solver, control simulation, dual functional) is built on these exact
half-sums, so there is no sampling error anywhere in the package.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

# Node-indexed fields stay cheap up to fairly deep lattices; anything that
# enumerates the 2^N paths explicitly is guarded much earlier.
MAX_LEVELS = 64
MAX_PATH_LEVELS = 20

PathId = tuple  # sign sequence of length N, entries +1 / -1


class LatticeError(ValueError):
    """Raised for malformed lattice inputs (sizes, levels, guards)."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid t_k = (offset + k) * dt, k = 0..N."""

    horizon: float
    steps: int
    step_offset: int = 0  # integer shift so sub-grids reuse the exact parent times

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def sqrt_dt(self) -> float:
        return math.sqrt(self.dt)

    @property
    def times(self) -> np.ndarray:
        return (self.step_offset + np.arange(self.steps + 1)) * self.dt


@dataclass(frozen=True)
class Lattice:
    """Recombining binomial tree over a TimeGrid.

    Node (k, j) is the level-k node reached by j up-moves; its successors
    are (k+1, j+1) on an up-move and (k+1, j) on a down-move.
    """

    grid: TimeGrid

    @property
    def steps(self) -> int:
        return self.grid.steps

    @property
    def dt(self) -> float:
        return self.grid.dt

    @property
    def sqrt_dt(self) -> float:
        return self.grid.sqrt_dt

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def time_at(self, k: int) -> float:
        return (self.grid.step_offset + k) * self.grid.dt

    def node_count(self, k: int) -> int:
        self._check_level(k)
        return k + 1

    def increments(self, k: int) -> np.ndarray:
        """The two equally likely increments out of any level-k node."""
        self._check_level(k)
        if k >= self.steps:
            raise LatticeError(f"no increments out of terminal level {k}")
        return np.array([self.sqrt_dt, -self.sqrt_dt])

    def brownian_values(self, k: int) -> np.ndarray:
        """W at every level-k node: (2j - k) * sqrt(dt), j = 0..k."""
        self._check_level(k)
        return (2.0 * np.arange(k + 1) - k) * self.sqrt_dt

    def _check_level(self, k: int) -> None:
        if not (0 <= k <= self.steps):
            raise LatticeError(f"level {k} outside 0..{self.steps}")


def build_lattice(horizon: float, steps: int, step_offset: int = 0) -> Lattice:
    """Validated constructor for the recombining lattice."""
    if not (isinstance(steps, (int, np.integer)) and not isinstance(steps, bool)):
        raise LatticeError(f"steps must be an integer, got {steps!r}")
    if not (1 <= steps <= MAX_LEVELS):
        raise LatticeError(f"steps must be within 1..{MAX_LEVELS}, got {steps}")
    if not (np.isfinite(horizon) and horizon > 0):
        raise LatticeError(f"horizon must be finite and positive, got {horizon!r}")
    return Lattice(TimeGrid(float(horizon), int(steps), int(step_offset)))


@dataclass(frozen=True)
class AdaptedField:
    """Real values attached to lattice nodes over a contiguous level range.

    Slab i holds the values of level ``level_lo + i`` as an array of length
    (level + 1).  Arrays are frozen after construction; fields behave as
    immutable values once built.
    """

    lattice: Lattice
    level_lo: int
    slabs: tuple = field(repr=False)

    def __post_init__(self):
        if not self.slabs:
            raise LatticeError("AdaptedField needs at least one level slab")
        frozen = []
        for i, slab in enumerate(self.slabs):
            k = self.level_lo + i
            arr = np.asarray(slab, dtype=float)
            if arr.shape != (k + 1,):
                raise LatticeError(
                    f"slab for level {k} has shape {arr.shape}, expected ({k + 1},)"
                )
            if not np.all(np.isfinite(arr)):
                raise LatticeError(f"non-finite values in slab for level {k}")
            arr = arr.copy()
            arr.flags.writeable = False
            frozen.append(arr)
        if self.level_hi > self.lattice.steps:
            raise LatticeError(
                f"levels {self.level_lo}..{self.level_hi} exceed lattice depth "
                f"{self.lattice.steps}"
            )
        object.__setattr__(self, "slabs", tuple(frozen))

    @property
    def level_hi(self) -> int:
        return self.level_lo + len(self.slabs) - 1

    @property
    def is_single_level(self) -> bool:
        return len(self.slabs) == 1

    def at(self, k: int) -> np.ndarray:
        if not (self.level_lo <= k <= self.level_hi):
            raise LatticeError(
                f"level {k} outside stored range {self.level_lo}..{self.level_hi}"
            )
        return self.slabs[k - self.level_lo]

    def __getitem__(self, node) -> float:
        k, j = node
        values = self.at(k)
        if not (0 <= j <= k):
            raise LatticeError(f"node ({k}, {j}) does not exist")
        return float(values[j])

    @classmethod
    def single(cls, lattice: Lattice, k: int, values) -> "AdaptedField":
        return cls(lattice, k, (np.asarray(values, dtype=float),))

    @classmethod
    def terminal(cls, lattice: Lattice, values) -> "AdaptedField":
        return cls.single(lattice, lattice.steps, values)

    @classmethod
    def constant(cls, lattice: Lattice, k: int, value: float) -> "AdaptedField":
        return cls.single(lattice, k, np.full(k + 1, float(value)))

    @classmethod
    def from_node_function(cls, lattice: Lattice, k: int, fn) -> "AdaptedField":
        """Field at level k from a vectorized function of the Brownian value."""
        return cls.single(lattice, k, fn(lattice.brownian_values(k)))


def half_sum(next_values: np.ndarray) -> np.ndarray:
    """One-level conditional expectation on raw arrays (length k+2 -> k+1)."""
    next_values = np.asarray(next_values, dtype=float)
    return 0.5 * (next_values[1:] + next_values[:-1])


def cond_expect(lattice: Lattice, field_next: AdaptedField) -> AdaptedField:
    """Exact conditional expectation of a single-level field one level down."""
    if not field_next.is_single_level:
        raise LatticeError("cond_expect expects a single-level field")
    k = field_next.level_lo
    if k < 1:
        raise LatticeError("cannot condition a root-level field further down")
    return AdaptedField.single(lattice, k - 1, half_sum(field_next.at(k)))


def enumerate_paths(lattice: Lattice):
    """All 2^N sign sequences, up-move first; each has probability 2^-N."""
    n = lattice.steps
    if n > MAX_PATH_LEVELS:
        raise LatticeError(
            f"path enumeration guarded at N <= {MAX_PATH_LEVELS}, got N = {n}"
        )
    return itertools.product((1, -1), repeat=n)


def path_node(path: PathId, k: int) -> int:
    """Up-count j of the node this path occupies at level k."""
    return sum(1 for s in path[:k] if s > 0)


@lru_cache(maxsize=32)
def sign_matrix(n: int) -> np.ndarray:
    """(2^n, n) matrix of path signs, row p = path p in enumeration order.

    Bit (n-1-k) of p encodes step k: 0 -> +1, 1 -> -1, so row 0 is the
    all-up path and rows appear exactly as enumerate_paths yields them.
    """
    if n > MAX_PATH_LEVELS:
        raise LatticeError(f"sign_matrix guarded at n <= {MAX_PATH_LEVELS}")
    p = np.arange(2**n, dtype=np.int64)[:, None]
    bits = (p >> (n - 1 - np.arange(n))[None, :]) & 1
    out = np.where(bits == 0, 1, -1).astype(np.int8)
    out.flags.writeable = False
    return out


@lru_cache(maxsize=64)
def prefix_up_counts(k: int) -> np.ndarray:
    """Up-move count j for every length-k path prefix (indexed like sign_matrix)."""
    if k == 0:
        return np.zeros(1, dtype=np.int64)
    if k > MAX_PATH_LEVELS:
        raise LatticeError(f"prefix tables guarded at k <= {MAX_PATH_LEVELS}")
    counts = np.array([k - bin(h).count("1") for h in range(2**k)], dtype=np.int64)
    counts.flags.writeable = False
    return counts


def leaf_nodes(n: int) -> np.ndarray:
    """Terminal node index j for every full path."""
    return prefix_up_counts(n)


def path_expectation(lattice: Lattice, terminal: AdaptedField) -> float:
    """Mean of a terminal field over all 2^N equally likely paths."""
    n = lattice.steps
    if terminal.level_lo != n or not terminal.is_single_level:
        raise LatticeError("path_expectation expects a terminal-level field")
    values = terminal.at(n)
    return float(values[leaf_nodes(n)].mean())
