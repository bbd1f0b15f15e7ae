"""Measures, step functions, and exact integral primitives on a dyadic lattice.

A measure is a nonnegative mass per leaf cell (not a density); a step function
is a real value per leaf cell.  Every integral below is a finite weighted sum,
so the only arithmetic error is double-precision rounding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .lattice import Cube, DomainMismatchError, DyadicLattice


@dataclass(frozen=True)
class ExponentPair:
    """An integrability pair (p, q) with both exponents in (1, infinity)."""

    p: float
    q: float

    def __post_init__(self):
        if not (1.0 < self.p < float("inf")) or not (1.0 < self.q < float("inf")):
            raise ValueError("exponents must lie strictly between 1 and infinity")

    @property
    def p_conj(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def q_conj(self) -> float:
        return self.q / (self.q - 1.0)

    def swapped_dual(self) -> "ExponentPair":
        """The pair (q', p') used by duality swaps."""
        return ExponentPair(self.q_conj, self.p_conj)


def _as_leaf_array(lattice: DyadicLattice, values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.size != lattice.n_leaves:
        raise DomainMismatchError(
            f"expected {lattice.n_leaves} leaf values, got {arr.size}"
        )
    arr = arr.reshape(-1).copy()
    arr.flags.writeable = False
    return arr


class Measure:
    """Nonnegative leaf masses with cached per-level subtree sums."""

    __slots__ = ("lattice", "mass", "_level_sums")

    def __init__(self, lattice: DyadicLattice, mass):
        arr = _as_leaf_array(lattice, mass)
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise ValueError("measure masses must be finite and nonnegative")
        self.lattice = lattice
        self.mass = arr
        self._level_sums: dict[int, np.ndarray] = {}

    @classmethod
    def lebesgue(cls, lattice: DyadicLattice) -> "Measure":
        """Leaf masses equal to leaf volumes."""
        vol = lattice.volume(lattice.leaf)
        return cls(lattice, np.full(lattice.n_leaves, vol))

    @classmethod
    def from_density(cls, lattice: DyadicLattice, density) -> "Measure":
        dens = np.asarray(density, dtype=float).reshape(-1)
        return cls(lattice, dens * lattice.volume(lattice.leaf))

    @property
    def grid(self) -> np.ndarray:
        return self.mass.reshape(self.lattice.grid_shape)

    def level_sums(self, level: int) -> np.ndarray:
        """Masses of all cubes at ``level`` (flat row-major, cached)."""
        cached = self._level_sums.get(level)
        if cached is None:
            cached = self.lattice.sum_to_level(self.mass, level)
            cached.flags.writeable = False
            self._level_sums[level] = cached
        return cached

    def total(self) -> float:
        return float(self.mass.sum())

    def __call__(self, cube: Cube) -> float:
        return cube_measure(self, cube)

    def __repr__(self) -> str:
        return f"Measure({self.lattice!r}, total={self.total()!r})"


class StepFunction:
    """A real value per leaf cell; constant on each leaf."""

    __slots__ = ("lattice", "values")

    def __init__(self, lattice: DyadicLattice, values):
        arr = _as_leaf_array(lattice, values)
        if not np.all(np.isfinite(arr)):
            raise ValueError("step-function values must be finite")
        self.lattice = lattice
        self.values = arr

    @classmethod
    def zeros(cls, lattice: DyadicLattice) -> "StepFunction":
        return cls(lattice, np.zeros(lattice.n_leaves))

    @classmethod
    def ones(cls, lattice: DyadicLattice) -> "StepFunction":
        return cls(lattice, np.ones(lattice.n_leaves))

    @classmethod
    def indicator(cls, lattice: DyadicLattice, cube: Cube) -> "StepFunction":
        out = np.zeros(lattice.grid_shape)
        out[lattice.leaf_slices(cube)] = 1.0
        return cls(lattice, out.ravel())

    @property
    def grid(self) -> np.ndarray:
        return self.values.reshape(self.lattice.grid_shape)

    def restrict(self, cube: Cube) -> "StepFunction":
        """Multiply by the indicator of ``cube``."""
        out = np.zeros(self.lattice.grid_shape)
        sl = self.lattice.leaf_slices(cube)
        out[sl] = self.grid[sl]
        return StepFunction(self.lattice, out.ravel())

    def __add__(self, other: "StepFunction") -> "StepFunction":
        _check_same_lattice(self, other)
        return StepFunction(self.lattice, self.values + other.values)

    def __sub__(self, other: "StepFunction") -> "StepFunction":
        _check_same_lattice(self, other)
        return StepFunction(self.lattice, self.values - other.values)

    def __mul__(self, scalar: float) -> "StepFunction":
        return StepFunction(self.lattice, self.values * float(scalar))

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"StepFunction({self.lattice!r})"


def _check_same_lattice(a, b) -> None:
    if a.lattice != b.lattice:
        raise DomainMismatchError("objects live on different lattices")


# ---------------------------------------------------------------------------
# exact integral primitives
# ---------------------------------------------------------------------------


def cube_measure(measure: Measure, cube: Cube) -> float:
    """sigma(Q): exact subtree sum of the leaf masses under the cube."""
    measure.lattice.check_cube(cube)
    sums = measure.level_sums(cube.level)
    return float(sums[measure.lattice.flat_coords(cube)])


def integrate(f: StepFunction, measure: Measure, cube: Cube | None = None) -> float:
    """The integral of f against the measure, optionally restricted to a cube."""
    _check_same_lattice(f, measure)
    if cube is None:
        return float(np.dot(f.values, measure.mass))
    sl = f.lattice.leaf_slices(cube)
    return float((f.grid[sl] * measure.grid[sl]).sum())

def average(f: StepFunction, measure: Measure, cube: Cube) -> float:
    """The measure-average of f over the cube, with the 0-mass convention 0."""
    _check_same_lattice(f, measure)
    mass = cube_measure(measure, cube)
    if mass == 0.0:
        return 0.0
    return integrate(f, measure, cube) / mass


def lp_norm(f: StepFunction, measure: Measure, p: float) -> float:
    """The L^p norm against the measure (p >= 1)."""
    _check_same_lattice(f, measure)
    if p < 1:
        raise ValueError("lp_norm requires p >= 1")
    total = float(np.dot(np.abs(f.values) ** p, measure.mass))
    return total ** (1.0 / p)


def lp_l2_norm(fs: Sequence[StepFunction], measure: Measure, p: float) -> float:
    """The mixed L^p(l^2) norm of a finite sequence of step functions."""
    if p < 1:
        raise ValueError("lp_l2_norm requires p >= 1")
    if len(fs) == 0:
        return 0.0
    for f in fs:
        _check_same_lattice(f, measure)
    sq = np.zeros(measure.lattice.n_leaves)
    for f in fs:
        sq += f.values**2
    total = float(np.dot(sq ** (p / 2.0), measure.mass))
    return total ** (1.0 / p)


def pairing(f: StepFunction, g: StepFunction, measure: Measure) -> float:
    """The bilinear pairing <f, g> against the measure (exact leaf sum)."""
    _check_same_lattice(f, g)
    _check_same_lattice(f, measure)
    return float(np.dot(f.values * g.values, measure.mass))


def leaf_norm_lp(values: np.ndarray, mass: np.ndarray, p: float) -> float:
    """lp_norm on raw arrays; used by inner loops that avoid object wrappers."""
    return float(np.dot(np.abs(values) ** p, mass)) ** (1.0 / p)
