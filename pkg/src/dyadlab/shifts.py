"""Dyadic shift operators and measure-difference square functions.

A shift is a sum of blocks, one per anchor cube K.  Each block pairs the input
against Haar functions on cubes m levels below K (weighted by the reference
measure) and emits Haar functions on cubes n levels below K.  Coefficients are
capped by sqrt(|I||J|)/|K|, which is exactly what makes every block dominated
by the measure-average over its anchor cube.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .functions import Measure, StepFunction, _check_same_lattice
from .lattice import Cube, DyadicLattice
from .martingale import HaarFunction, haar_block, haar_evaluate


class ShiftConstructionError(ValueError):
    """A shift block violates an admissibility constraint."""


@dataclass(frozen=True)
class ShiftEntry:
    """One rank-one term: coeff * <f, source Haar>_measure * target Haar."""

    source: HaarFunction
    target: HaarFunction
    coeff: float


@dataclass(frozen=True)
class ShiftBlock:
    cube: Cube
    entries: tuple[ShiftEntry, ...]


@dataclass(frozen=True)
class ShiftSpec:
    """A dyadic shift with source depth ``m`` and target depth ``n``.

    ``specific_form`` marks shifts whose source and target cubes sit in
    different children of the anchor (their minimal common ancestor is the
    anchor itself).
    """

    lattice: DyadicLattice
    m: int
    n: int
    blocks: tuple[ShiftBlock, ...]
    specific_form: bool = False

    def __post_init__(self):
        if self.m < 0 or self.n < 0:
            raise ShiftConstructionError("shift depths must be nonnegative")
        lat = self.lattice
        seen_anchors = set()
        for block in self.blocks:
            lat.check_cube(block.cube)
            if block.cube in seen_anchors:
                raise ShiftConstructionError(f"duplicate block anchor {block.cube}")
            seen_anchors.add(block.cube)
            seen_pairs = set()
            for entry in block.entries:
                src, tgt = entry.source.cube, entry.target.cube
                lat.check_cube(src)
                lat.check_cube(tgt)
                if (
                    src.level - self.m != block.cube.level
                    or lat.ancestor(src, self.m) != block.cube
                ):
                    raise ShiftConstructionError(
                        f"source cube {src} is not {self.m} levels below anchor {block.cube}"
                    )
                if (
                    tgt.level - self.n != block.cube.level
                    or lat.ancestor(tgt, self.n) != block.cube
                ):
                    raise ShiftConstructionError(
                        f"target cube {tgt} is not {self.n} levels below anchor {block.cube}"
                    )
                pair = (src, tgt)
                if pair in seen_pairs:
                    raise ShiftConstructionError(
                        f"duplicate source/target pair {pair} in block {block.cube}"
                    )
                seen_pairs.add(pair)
                bound = coefficient_bound(src, tgt, block.cube)
                if abs(entry.coeff) > bound * (1.0 + 1e-12):
                    raise ShiftConstructionError(
                        f"coefficient {entry.coeff} exceeds bound {bound} "
                        f"for pair {pair} under {block.cube}"
                    )
                if self.specific_form:
                    if src == block.cube or tgt == block.cube:
                        raise ShiftConstructionError(
                            "specific form needs source and target strictly below the anchor"
                        )
                    if _child_of(lat, src, block.cube) == _child_of(lat, tgt, block.cube):
                        raise ShiftConstructionError(
                            "specific form: source and target share a child of the anchor"
                        )

    @property
    def complexity(self) -> int:
        return max(self.m, self.n)

    @property
    def parameters(self) -> tuple[int, int]:
        return (self.m, self.n)

    def n_entries(self) -> int:
        return sum(len(b.entries) for b in self.blocks)


def coefficient_bound(source: Cube, target: Cube, anchor: Cube) -> float:
    return (source.volume() * target.volume()) ** 0.5 / anchor.volume()


def _child_of(lattice: DyadicLattice, cube: Cube, anchor: Cube) -> Cube:
    """The child of ``anchor`` containing ``cube`` (cube strictly below anchor)."""
    return lattice.ancestor(cube, cube.level - anchor.level - 1)


def adjoint_spec(spec: ShiftSpec) -> ShiftSpec:
    """The formal adjoint: same coefficients, Haar roles swapped, depths (n, m)."""
    blocks = tuple(
        ShiftBlock(
            cube=block.cube,
            entries=tuple(
                ShiftEntry(source=e.target, target=e.source, coeff=e.coeff)
                for e in block.entries
            ),
        )
        for block in spec.blocks
    )
    return ShiftSpec(
        lattice=spec.lattice,
        m=spec.n,
        n=spec.m,
        blocks=blocks,
        specific_form=spec.specific_form,
    )


# ---------------------------------------------------------------------------
# application
# ---------------------------------------------------------------------------


class ShiftApplicator:
    """Precomputed application closure for one (shift, measure) pair.

    ``apply`` evaluates the shift; ``apply_transpose`` evaluates the plain
    coordinate transpose of the same linear map, which is what gradient
    computations need (not the formal measure adjoint).
    """

    __slots__ = ("lattice", "n_leaves", "_terms")

    def __init__(self, spec: ShiftSpec, measure: Measure):
        if spec.lattice != measure.lattice:
            raise ValueError("shift and measure live on different lattices")
        lat = spec.lattice
        self.lattice = lat
        self.n_leaves = lat.n_leaves
        terms = []
        for block in spec.blocks:
            for e in block.entries:
                idx_src = lat.leaf_indices(e.source.cube)
                idx_tgt = lat.leaf_indices(e.target.cube)
                src_vals = haar_block(lat, e.source).ravel()
                tgt_vals = haar_block(lat, e.target).ravel()
                weighted_src = src_vals * measure.mass[idx_src]
                terms.append((idx_src, weighted_src, idx_tgt, tgt_vals, e.coeff))
        self._terms = terms

    def apply(self, values: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n_leaves)
        for idx_src, weighted_src, idx_tgt, tgt_vals, coeff in self._terms:
            pairing = float(np.dot(values[idx_src], weighted_src))
            if pairing != 0.0:
                out[idx_tgt] += (coeff * pairing) * tgt_vals
        return out

    def apply_transpose(self, values: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n_leaves)
        for idx_src, weighted_src, idx_tgt, tgt_vals, coeff in self._terms:
            pairing = float(np.dot(values[idx_tgt], tgt_vals))
            if pairing != 0.0:
                out[idx_src] += (coeff * pairing) * weighted_src
        return out


def apply_block(block: ShiftBlock, spec: ShiftSpec, f: StepFunction, measure: Measure) -> StepFunction:
    """Apply a single block of the shift to f."""
    one_block = ShiftSpec(
        lattice=spec.lattice,
        m=spec.m,
        n=spec.n,
        blocks=(block,),
        specific_form=spec.specific_form,
    )
    return apply_shift(one_block, f, measure)


def apply_shift(spec: ShiftSpec, f: StepFunction, measure: Measure) -> StepFunction:
    """Apply the shift to f, pairing against the given reference measure."""
    _check_same_lattice(f, measure)
    if spec.lattice != f.lattice:
        raise ValueError("shift and input live on different lattices")
    out = ShiftApplicator(spec, measure).apply(f.values)
    return StepFunction(spec.lattice, out)


def kernel_matrix(spec: ShiftSpec, size_limit: int = 1 << 12) -> np.ndarray:
    """Dense kernel K with (T f)(leaf i) = sum_j K[i, j] * mass_j * f_j.

    The kernel itself is measure-free; application against a measure multiplies
    columns by the leaf masses.  Guarded by a size limit on the leaf count.
    """
    lat = spec.lattice
    if lat.n_leaves > size_limit:
        raise ValueError(f"kernel assembly capped at {size_limit} leaves")
    out = np.zeros((lat.n_leaves, lat.n_leaves))
    for block in spec.blocks:
        for e in block.entries:
            idx_src = lat.leaf_indices(e.source.cube)
            idx_tgt = lat.leaf_indices(e.target.cube)
            src_vals = haar_block(lat, e.source).ravel()
            tgt_vals = haar_block(lat, e.target).ravel()
            out[np.ix_(idx_tgt, idx_src)] += e.coeff * np.outer(tgt_vals, src_vals)
    return out


# ---------------------------------------------------------------------------
# square functions built from measure-density differences
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SquareFunctionSpec:
    """Coefficients b_Q on non-leaf cubes for the density-difference square function."""

    lattice: DyadicLattice
    coefficients: tuple[tuple[Cube, float], ...]

    def __post_init__(self):
        seen = set()
        for cube, _ in self.coefficients:
            self.lattice.check_cube(cube)
            if self.lattice.is_leaf(cube):
                raise ValueError("square-function coefficients live on non-leaf cubes")
            if cube in seen:
                raise ValueError(f"duplicate coefficient cube {cube}")
            seen.add(cube)

    @classmethod
    def from_dict(cls, lattice: DyadicLattice, coeffs: dict[Cube, float]) -> "SquareFunctionSpec":
        items = sorted(coeffs.items(), key=lambda kv: lattice.cube_index(kv[0]))
        return cls(lattice, tuple(items))

    @classmethod
    def constant(cls, lattice: DyadicLattice, value: float = 1.0) -> "SquareFunctionSpec":
        coeffs = {}
        for level in range(-lattice.top, lattice.leaf):
            for cube in lattice.cubes_at_level(level):
                coeffs[cube] = value
        return cls.from_dict(lattice, coeffs)

    def coefficient_dict(self) -> dict[Cube, float]:
        return dict(self.coefficients)


def density_difference(f: StepFunction, measure: Measure, cube: Cube) -> StepFunction:
    """Child-vs-cube difference of volume-density averages of f d(measure) on a cube.

    This is the martingale difference of the measure f*d(measure) taken with
    Lebesgue-volume denominators, the building block of the square function.
    """
    _check_same_lattice(f, measure)
    lat = f.lattice
    lat.check_cube(cube)
    if lat.is_leaf(cube):
        raise ValueError("density difference needs a non-leaf cube")
    weighted = f.values * measure.mass
    out = np.zeros(lat.grid_shape)
    base = float(weighted.reshape(lat.grid_shape)[lat.leaf_slices(cube)].sum()) / cube.volume()
    child_vol = lat.volume(cube.level + 1)
    for child in lat.children(cube):
        child_int = float(weighted.reshape(lat.grid_shape)[lat.leaf_slices(child)].sum())
        out[lat.leaf_slices(child)] = child_int / child_vol - base
    return StepFunction(lat, out.ravel())


class SquareFunctionApplicator:
    """Levelwise evaluation of the square function for one (spec, measure) pair."""

    __slots__ = ("lattice", "measure", "_level_b2", "_levels")

    def __init__(self, spec: SquareFunctionSpec, measure: Measure, within: Cube | None = None):
        lat = spec.lattice
        if lat != measure.lattice:
            raise ValueError("square-function spec and measure on different lattices")
        self.lattice = lat
        self.measure = measure
        level_b2: dict[int, np.ndarray] = {}
        for cube, b in spec.coefficients:
            if within is not None and not lat.contains(within, cube):
                continue
            arr = level_b2.get(cube.level)
            if arr is None:
                arr = np.zeros(lat.n_cubes_at_level(cube.level))
                level_b2[cube.level] = arr
            arr[lat.flat_coords(cube)] = b * b
        self._level_b2 = level_b2
        self._levels = sorted(level_b2)

    def _density_layers(self, values: np.ndarray) -> dict[int, np.ndarray]:
        lat = self.lattice
        weighted = values * self.measure.mass
        layers = {}
        needed = set()
        for level in self._levels:
            needed.add(level)
            needed.add(level + 1)
        for level in sorted(needed):
            sums = lat.sum_to_level(weighted, level) / lat.volume(level)
            layers[level] = lat.spread_from_level(sums, level)
        return layers

    def squared(self, values: np.ndarray) -> np.ndarray:
        """Leafwise square of the square function (sum over cubes of b^2 * diff^2)."""
        lat = self.lattice
        layers = self._density_layers(values)
        total = np.zeros(lat.n_leaves)
        for level in self._levels:
            diff = layers[level + 1] - layers[level]
            total += lat.spread_from_level(self._level_b2[level], level) * diff**2
        return total

    def per_level_diffs(self, values: np.ndarray) -> dict[int, np.ndarray]:
        """For gradients: the raw density-difference layer per active level."""
        layers = self._density_layers(values)
        return {level: layers[level + 1] - layers[level] for level in self._levels}

    def accumulate_transpose(self, level: int, layer_values: np.ndarray) -> np.ndarray:
        """Transpose of values -> density-difference layer at ``level`` (for gradients)."""
        lat = self.lattice
        up = lat.sum_to_level(layer_values, level + 1) / lat.volume(level + 1)
        down = lat.sum_to_level(layer_values, level) / lat.volume(level)
        out = lat.spread_from_level(up, level + 1) - lat.spread_from_level(down, level)
        return out * self.measure.mass

    @property
    def active_levels(self) -> list[int]:
        return list(self._levels)

    def level_b2(self, level: int) -> np.ndarray:
        return self._level_b2[level]


def apply_square_function(
    spec: SquareFunctionSpec,
    f: StepFunction,
    measure: Measure,
    within: Cube | None = None,
) -> StepFunction:
    """The square function of f: leafwise l^2 size of coefficiented density differences.

    ``within`` restricts the defining sum to cubes contained in that cube.
    """
    _check_same_lattice(f, measure)
    app = SquareFunctionApplicator(spec, measure, within=within)
    return StepFunction(f.lattice, np.sqrt(app.squared(f.values)))


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------


def _random_pattern(rng: np.random.Generator, lattice: DyadicLattice, cube: Cube, allow_noncancellative: bool) -> tuple[int, ...]:
    if lattice.is_leaf(cube):
        return (0,) * lattice.dimension
    if allow_noncancellative:
        return tuple(int(b) for b in rng.integers(0, 2, size=lattice.dimension))
    while True:
        bits = tuple(int(b) for b in rng.integers(0, 2, size=lattice.dimension))
        if any(bits):
            return bits


def generate_random_shift(
    lattice: DyadicLattice,
    m: int,
    n: int,
    density: float,
    seed: int,
    specific_form: bool = False,
    allow_noncancellative: bool = False,
) -> ShiftSpec:
    """Draw a random admissible shift; each candidate (anchor, source, target)
    triple is kept with probability ``density``.

    Coefficients are uniform in the admissible interval and then shrunk by an
    independent uniform factor, so the admissibility bound is strict almost
    surely.  Haar patterns are cancellative unless the cube is a leaf or
    non-cancellative patterns are explicitly allowed.
    """
    if not (0.0 <= density <= 1.0):
        raise ValueError("density must lie in [0, 1]")
    if specific_form and (m < 1 or n < 1):
        raise ShiftConstructionError("specific form forces both depths to be at least 1")
    rng = np.random.default_rng(seed)
    blocks = []
    max_depth = max(m, n)
    top_level = -lattice.top
    for level in range(top_level, lattice.leaf - max_depth + 1):
        for anchor in lattice.cubes_at_level(level):
            sources = lattice.descendants(anchor, m)
            targets = lattice.descendants(anchor, n)
            entries = []
            for src in sources:
                for tgt in targets:
                    if specific_form and _child_of(lattice, src, anchor) == _child_of(
                        lattice, tgt, anchor
                    ):
                        continue
                    if rng.random() >= density:
                        continue
                    bound = coefficient_bound(src, tgt, anchor)
                    coeff = rng.uniform(-bound, bound) * rng.uniform(0.0, 1.0)
                    entries.append(
                        ShiftEntry(
                            source=HaarFunction(
                                src, _random_pattern(rng, lattice, src, allow_noncancellative)
                            ),
                            target=HaarFunction(
                                tgt, _random_pattern(rng, lattice, tgt, allow_noncancellative)
                            ),
                            coeff=float(coeff),
                        )
                    )
            if entries:
                blocks.append(ShiftBlock(cube=anchor, entries=tuple(entries)))
    return ShiftSpec(
        lattice=lattice, m=m, n=n, blocks=tuple(blocks), specific_form=specific_form
    )


@dataclass(frozen=True)
class HaarMultiplier:
    """One member of the single-cube shift family used by the lower-bound chain.

    ``shift`` concentrates all output of the base cube's Haar coefficient onto
    the cubes n-m levels below; ``probe`` is the rescaled Haar function whose
    image under the shift has constant absolute value on the base cube.
    """

    base: Cube
    shift: ShiftSpec
    probe: StepFunction


def haar_multiplier_family(lattice: DyadicLattice, m: int, n: int) -> list[HaarMultiplier]:
    """All single-Haar shifts with depths (m, n), m <= n, plus their probes."""
    if m > n:
        raise ValueError("the family needs m <= n")
    out = []
    min_level = -lattice.top + m
    max_level = lattice.leaf - (n - m)
    for level in range(min_level, max_level + 1):
        for base in lattice.cubes_at_level(level):
            anchor = lattice.ancestor(base, m)
            pattern_base = (
                (0,) * lattice.dimension if lattice.is_leaf(base) else (1,) * lattice.dimension
            )
            source = HaarFunction(base, pattern_base)
            entries = []
            for tgt in lattice.descendants(base, n - m):
                pattern_tgt = (
                    (0,) * lattice.dimension if lattice.is_leaf(tgt) else (1,) * lattice.dimension
                )
                entries.append(
                    ShiftEntry(
                        source=source,
                        target=HaarFunction(tgt, pattern_tgt),
                        coeff=coefficient_bound(base, tgt, anchor),
                    )
                )
            spec = ShiftSpec(
                lattice=lattice, m=m, n=n, blocks=(ShiftBlock(cube=anchor, entries=tuple(entries)),)
            )
            probe = haar_evaluate(lattice, source) * (base.volume() ** 0.5)
            out.append(HaarMultiplier(base=base, shift=spec, probe=probe))
    return out
