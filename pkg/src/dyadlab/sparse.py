"""Stopping-time families, sparseness verification, and embedding checkers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .functions import (
    ExponentPair,
    Measure,
    StepFunction,
    average,
    cube_measure,
    integrate,
    lp_l2_norm,
    _check_same_lattice,
)
from .lattice import Cube, DyadicLattice


@dataclass
class SparseFamily:
    """Stopping cubes with their stopping-children relation.

    The exceptional set of a member is the part of the cube not covered by its
    stopping children; the family is gamma-sparse when each exceptional set
    keeps at least a gamma fraction of the member's mass.
    """

    lattice: DyadicLattice
    root: Cube
    children: dict[Cube, list[Cube]] = field(default_factory=dict)

    @property
    def cubes(self) -> list[Cube]:
        return sorted(self.children.keys(), key=self.lattice.cube_index)

    def stopping_children(self, cube: Cube) -> list[Cube]:
        return list(self.children.get(cube, []))

    def exceptional_mass(self, measure: Measure, cube: Cube) -> float:
        total = cube_measure(measure, cube)
        for child in self.children.get(cube, []):
            total -= cube_measure(measure, child)
        return total

    def exceptional_mask(self, cube: Cube) -> np.ndarray:
        """Boolean leaf mask of the exceptional set (grid shape, for disjointness tests)."""
        mask = np.zeros(self.lattice.grid_shape, dtype=bool)
        mask[self.lattice.leaf_slices(cube)] = True
        for child in self.children.get(cube, []):
            mask[self.lattice.leaf_slices(child)] = False
        return mask

    def container(self, cube: Cube) -> Cube:
        """The minimal family member containing ``cube`` (the root contains all)."""
        if not self.lattice.contains(self.root, cube):
            raise ValueError(f"{cube} is not below the family root {self.root}")
        current = self.root
        while True:
            nxt = None
            for child in self.children.get(current, []):
                if self.lattice.contains(child, cube):
                    nxt = child
                    break
            if nxt is None:
                return current
            current = nxt


def principal_cubes(f: StepFunction, measure: Measure, root: Cube | None = None) -> SparseFamily:
    """Classical stopping-time family: children are the maximal subcubes whose
    absolute average strictly doubles the parent's.

    Mass-zero cubes have average zero and can never be selected.
    """
    _check_same_lattice(f, measure)
    lat = f.lattice
    if root is None:
        root = lat.root
    lat.check_cube(root)
    abs_f = StepFunction(lat, np.abs(f.values))
    family = SparseFamily(lattice=lat, root=root)

    def stopping_children(top: Cube, threshold: float) -> list[Cube]:
        found = []
        queue = [] if lat.is_leaf(top) else lat.children(top)
        while queue:
            cube = queue.pop(0)
            if average(abs_f, measure, cube) > threshold:
                found.append(cube)
            elif not lat.is_leaf(cube):
                queue.extend(lat.children(cube))
        return found

    stack = [root]
    while stack:
        cube = stack.pop()
        base = average(abs_f, measure, cube)
        kids = stopping_children(cube, 2.0 * base) if base > 0 else []
        family.children[cube] = kids
        stack.extend(kids)
    return family


def verify_sparse(
    family: SparseFamily, measure: Measure, gamma: float = 0.5
) -> tuple[bool, dict[Cube, float]]:
    """Check gamma-sparseness; returns the verdict and each member's mass fraction."""
    fractions: dict[Cube, float] = {}
    ok = True
    for cube in family.cubes:
        total = cube_measure(measure, cube)
        if total == 0.0:
            fractions[cube] = 1.0
            continue
        frac = family.exceptional_mass(measure, cube) / total
        fractions[cube] = frac
        if frac < gamma - 1e-12:
            ok = False
    return ok, fractions


def dyadic_maximal(f: StepFunction, measure: Measure) -> StepFunction:
    """The dyadic maximal function: leafwise best absolute average over containing cubes."""
    _check_same_lattice(f, measure)
    lat = f.lattice
    weighted = np.abs(f.values) * measure.mass
    best = np.zeros(lat.n_leaves)
    for level in lat.levels:
        num = lat.sum_to_level(weighted, level)
        den = measure.level_sums(level)
        avg = np.zeros_like(num)
        np.divide(num, den, out=avg, where=den > 0)
        best = np.maximum(best, lat.spread_from_level(avg, level))
    return StepFunction(lat, best)


def carleson_check(
    families: Sequence[SparseFamily],
    fs: Sequence[StepFunction],
    measure: Measure,
    p: float,
) -> tuple[float, float]:
    """Both sides of the vector embedding over stopping families.

    Left: mixed norm of the per-family average pile-up; right: the plain mixed
    norm of the inputs.  The caller tracks the observed constant.
    """
    if len(families) != len(fs):
        raise ValueError("need one stopping family per function")
    if not fs:
        return 0.0, 0.0
    lat = fs[0].lattice
    pile = np.zeros(lat.grid_shape)
    for family, f in zip(families, fs):
        for cube in family.cubes:
            avg = average(f, measure, cube)
            if avg != 0.0:
                pile[lat.leaf_slices(cube)] += avg * avg
    lhs = float(np.dot(pile.ravel() ** (p / 2.0), measure.mass)) ** (1.0 / p)
    rhs = lp_l2_norm(list(fs), measure, p)
    return lhs, rhs


def stein_check(
    assignments: Sequence[tuple[Cube, StepFunction]],
    sigma: Measure,
    w: Measure,
    exponents: ExponentPair,
) -> tuple[float, float]:
    """Both sides of the two-weight vector inequality for cube-indexed assignments.

    Each assignment pairs a cube with a function; only the part of the function
    living on the cube matters on either side.
    """
    if not assignments:
        return 0.0, 0.0
    lat = sigma.lattice
    lhs_pile = np.zeros(lat.grid_shape)
    rhs_pile = np.zeros(lat.grid_shape)
    sig_grid = sigma.grid
    for cube, f in assignments:
        _check_same_lattice(f, sigma)
        sl = lat.leaf_slices(cube)
        block = f.grid[sl]
        mean = float((block * sig_grid[sl]).sum()) / cube.volume()
        lhs_pile[sl] += mean * mean
        rhs_pile[sl] += block * block
    lhs = float(np.dot(lhs_pile.ravel() ** (exponents.q / 2.0), w.mass)) ** (1.0 / exponents.q)
    rhs = float(np.dot(rhs_pile.ravel() ** (exponents.p / 2.0), sigma.mass)) ** (1.0 / exponents.p)
    return lhs, rhs
