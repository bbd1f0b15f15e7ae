"""Weighted martingale machinery: averages, differences, expansions, Haar functions.

All operators here are taken with respect to a measure given by leaf masses.
Cubes with zero mass follow the convention that their average is zero, so
conditional expectations vanish there and no division by zero occurs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .functions import Measure, StepFunction, average, lp_l2_norm, _check_same_lattice
from .lattice import Cube, DyadicLattice


# ---------------------------------------------------------------------------
# conditional expectations and martingale differences
# ---------------------------------------------------------------------------


def _level_averages(f: StepFunction, measure: Measure, level: int) -> np.ndarray:
    """Per-cube measure-averages of f at ``level`` (0 on mass-zero cubes)."""
    num = measure.lattice.sum_to_level(f.values * measure.mass, level)
    den = measure.level_sums(level)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


def conditional_expectation(f: StepFunction, measure: Measure, level: int) -> StepFunction:
    """E_level f: the function equal on each level-cube to the measure-average."""
    _check_same_lattice(f, measure)
    lat = f.lattice
    avgs = _level_averages(f, measure, level)
    return StepFunction(lat, lat.spread_from_level(avgs, level))


def martingale_difference(f: StepFunction, measure: Measure, cube: Cube) -> StepFunction:
    """The one-cube martingale difference: child averages minus the cube average.

    Zero measure-average, supported on the cube, constant on its children.
    Leaf cubes are rejected (they have no children inside the lattice).
    """
    _check_same_lattice(f, measure)
    lat = f.lattice
    lat.check_cube(cube)
    if lat.is_leaf(cube):
        raise ValueError("martingale difference needs a non-leaf cube")
    out = np.zeros(lat.grid_shape)
    base = average(f, measure, cube)
    for child in lat.children(cube):
        out[lat.leaf_slices(child)] = average(f, measure, child) - base
    return StepFunction(lat, out.ravel())


def block_difference(f: StepFunction, measure: Measure, cube: Cube, depth: int) -> StepFunction:
    """Sum of martingale differences over all cubes ``depth`` levels below ``cube``.

    At depth reaching the leaf level the collection has no non-leaf member and
    the result is the zero function; beyond that is a depth overflow.
    """
    _check_same_lattice(f, measure)
    lat = f.lattice
    lat.check_cube(cube)
    if depth < 0:
        raise ValueError("block depth must be nonnegative")
    if cube.level + depth > lat.leaf:
        raise ValueError("block depth overflows the leaf level")
    if cube.level + depth == lat.leaf:
        return StepFunction.zeros(lat)
    level = cube.level + depth
    upper = _level_averages(f, measure, level + 1)
    lower = _level_averages(f, measure, level)
    layer = lat.spread_from_level(upper, level + 1) - lat.spread_from_level(lower, level)
    out = np.zeros(lat.grid_shape)
    sl = lat.leaf_slices(cube)
    out[sl] = layer.reshape(lat.grid_shape)[sl]
    return StepFunction(lat, out.ravel())


# ---------------------------------------------------------------------------
# expansions
# ---------------------------------------------------------------------------


@dataclass
class MartingaleExpansion:
    """Coarse part at ``base_level`` plus one difference per finer non-leaf cube."""

    lattice: DyadicLattice
    base_level: int
    coarse: StepFunction
    differences: dict[Cube, StepFunction] = field(default_factory=dict)

    def reconstruct(self) -> StepFunction:
        total = self.coarse.values.copy()
        for diff in self.differences.values():
            total += diff.values
        return StepFunction(self.lattice, total)

    def terms(self) -> list[StepFunction]:
        return [self.coarse, *self.differences.values()]


def expand(f: StepFunction, measure: Measure, base_level: int | None = None) -> MartingaleExpansion:
    """Finite martingale expansion of f starting from ``base_level``.

    The reconstruction equals f on every leaf of positive mass; mass-zero
    leaves carry no information and reconstruct to zero.
    """
    _check_same_lattice(f, measure)
    lat = f.lattice
    if base_level is None:
        base_level = -lat.top
    lat.check_level(base_level)
    expansion = MartingaleExpansion(
        lattice=lat,
        base_level=base_level,
        coarse=conditional_expectation(f, measure, base_level),
    )
    for level in range(base_level, lat.leaf):
        upper = lat.spread_from_level(_level_averages(f, measure, level + 1), level + 1)
        lower = lat.spread_from_level(_level_averages(f, measure, level), level)
        layer = (upper - lower).reshape(lat.grid_shape)
        for cube in lat.cubes_at_level(level):
            block = np.zeros(lat.grid_shape)
            sl = lat.leaf_slices(cube)
            block[sl] = layer[sl]
            expansion.differences[cube] = StepFunction(lat, block.ravel())
    return expansion


def burkholder_ratio(
    fs: Sequence[StepFunction], measure: Measure, p: float, base_level: int | None = None
) -> tuple[float, float]:
    """Both sides of the martingale square-function comparison for a vector input.

    Returns (plain mixed norm, square-function-side norm); their quotient is the
    empirically monitored equivalence bracket.
    """
    if len(fs) == 0:
        return 0.0, 0.0
    lat = fs[0].lattice
    if base_level is None:
        base_level = -lat.top
    lhs = lp_l2_norm(list(fs), measure, p)
    sq = np.zeros(lat.n_leaves)
    for f in fs:
        coarse = conditional_expectation(f, measure, base_level)
        sq += coarse.values**2
        for level in range(base_level, lat.leaf):
            upper = lat.spread_from_level(_level_averages(f, measure, level + 1), level + 1)
            lower = lat.spread_from_level(_level_averages(f, measure, level), level)
            sq += (upper - lower) ** 2
    rhs = float(np.dot(sq ** (p / 2.0), measure.mass)) ** (1.0 / p)
    return lhs, rhs


# ---------------------------------------------------------------------------
# Haar functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class HaarFunction:
    """A tensor Haar function on a cube, one 0/1 pattern bit per axis.

    Pattern bit 0 means the normalized indicator factor, bit 1 the oscillating
    factor (+1 on the lower half, -1 on the upper half of that axis).  The
    normalization is the Lebesgue one: the square integrates to 1 over space,
    whatever measures later appear in pairings.
    """

    cube: Cube
    pattern: tuple[int, ...]

    def __post_init__(self):
        if len(self.pattern) != self.cube.dimension:
            raise ValueError("pattern length must match the cube dimension")
        if any(b not in (0, 1) for b in self.pattern):
            raise ValueError("pattern bits must be 0 or 1")

    @property
    def cancellative(self) -> bool:
        return any(self.pattern)


def haar_block(lattice: DyadicLattice, haar: HaarFunction) -> np.ndarray:
    """Leaf values of the Haar function on its own cube block (N-d array)."""
    lattice.check_cube(haar.cube)
    s = lattice.leaves_per_axis(haar.cube.level)
    if haar.cancellative and s < 2:
        raise ValueError("oscillating Haar factor needs the cube's children")
    scale = haar.cube.volume() ** -0.5
    block = np.full((s,) * lattice.dimension, scale)
    for axis, bit in enumerate(haar.pattern):
        if bit:
            sign = np.ones(s)
            sign[s // 2 :] = -1.0
            shape = [1] * lattice.dimension
            shape[axis] = s
            block = block * sign.reshape(shape)
    return block


def haar_evaluate(lattice: DyadicLattice, haar: HaarFunction) -> StepFunction:
    """The Haar function as a step function on the whole lattice."""
    out = np.zeros(lattice.grid_shape)
    out[lattice.leaf_slices(haar.cube)] = haar_block(lattice, haar)
    return StepFunction(lattice, out.ravel())


# ---------------------------------------------------------------------------
# random-sign expectations
# ---------------------------------------------------------------------------

EXACT_SIGN_LIMIT = 20
MONTE_CARLO_SAMPLES = 1 << 14


def rademacher_expectation(
    fs: Sequence[StepFunction],
    measure: Measure,
    p: float,
    mode: str = "auto",
    seed: int | None = None,
) -> float:
    """E |sum_i eps_i f_i|_{L^p}^p over independent random signs.

    Exact enumeration over all 2**len(fs) patterns up to 20 functions; beyond
    that (or on request) a seeded Monte Carlo average over 2**14 sign draws.
    """
    if p < 1:
        raise ValueError("rademacher_expectation requires p >= 1")
    if len(fs) == 0:
        return 0.0
    for f in fs:
        _check_same_lattice(f, measure)
    count = len(fs)
    values = np.stack([f.values for f in fs])
    mass = measure.mass
    if mode not in ("auto", "exact", "mc"):
        raise ValueError("mode must be one of auto/exact/mc")
    if mode == "exact" and count > EXACT_SIGN_LIMIT:
        raise ValueError(f"exact enumeration capped at {EXACT_SIGN_LIMIT} functions")
    exact = mode == "exact" or (mode == "auto" and count <= EXACT_SIGN_LIMIT)
    if exact:
        total = 0.0
        n_patterns = 1 << count
        batch = 1 << 12
        for start in range(0, n_patterns, batch):
            idx = np.arange(start, min(start + batch, n_patterns), dtype=np.uint64)
            bits = (idx[:, None] >> np.arange(count, dtype=np.uint64)) & 1
            signs = bits.astype(float) * 2.0 - 1.0
            sums = signs @ values
            total += float((np.abs(sums) ** p @ mass).sum())
        return total / n_patterns
    if seed is None:
        raise ValueError("Monte Carlo sign expectation requires a seed")
    rng = np.random.default_rng(seed)
    signs = rng.integers(0, 2, size=(MONTE_CARLO_SAMPLES, count)).astype(float) * 2.0 - 1.0
    sums = signs @ values
    return float((np.abs(sums) ** p @ mass).mean())
