"""Finite dyadic lattices over [0, 2**top)**dimension with leaf side 2**-leaf.

A lattice holds cubes at every level from -top (the single root cube) down to
``leaf`` (the atoms).  A cube at level ``l`` has side length 2**-l, so levels
increase toward finer cubes.  Leaf data (masses, step-function values) is
stored flat in row-major order over the leaf grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np


class DomainMismatchError(ValueError):
    """A cube, measure, or function was used with a foreign lattice."""


@dataclass(frozen=True, order=True)
class Cube:
    """A dyadic cube: ``level`` fixes the side 2**-level, ``coords`` the position.

    ``coords[i]`` counts cubes of that side along axis i, so the cube covers
    ``[coords[i] * 2**-level, (coords[i]+1) * 2**-level)`` in each axis.
    """

    level: int
    coords: tuple[int, ...]

    @property
    def dimension(self) -> int:
        return len(self.coords)

    def side(self) -> float:
        return 2.0 ** (-self.level)

    def volume(self) -> float:
        return 2.0 ** (-self.level * self.dimension)


class DyadicLattice:
    """Cube combinatorics plus the leaf-grid layout shared by all lattice data."""

    __slots__ = ("dimension", "top", "leaf")

    def __init__(self, dimension: int = 1, top: int = 0, leaf: int = 3):
        if dimension < 1:
            raise ValueError("dimension must be a positive integer")
        if top < 0 or leaf < 0:
            raise ValueError("top and leaf exponents must be nonnegative")
        if leaf + top > 62:
            raise ValueError("lattice depth too large for index arithmetic")
        object.__setattr__(self, "dimension", int(dimension))
        object.__setattr__(self, "top", int(top))
        object.__setattr__(self, "leaf", int(leaf))

    def __setattr__(self, name, value):  # immutable; hashable identity by parameters
        raise AttributeError("DyadicLattice is immutable")

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, DyadicLattice)
            and self.dimension == other.dimension
            and self.top == other.top
            and self.leaf == other.leaf
        )

    def __hash__(self) -> int:
        return hash((self.dimension, self.top, self.leaf))

    def __repr__(self) -> str:
        return f"DyadicLattice(dimension={self.dimension}, top={self.top}, leaf={self.leaf})"

    # -- levels ---------------------------------------------------------

    @property
    def levels(self) -> range:
        return range(-self.top, self.leaf + 1)

    @property
    def root(self) -> Cube:
        return Cube(-self.top, (0,) * self.dimension)

    def check_level(self, level: int) -> None:
        if not (-self.top <= level <= self.leaf):
            raise ValueError(f"level {level} outside [{-self.top}, {self.leaf}]")

    def cubes_per_axis(self, level: int) -> int:
        self.check_level(level)
        return 1 << (self.top + level)

    def n_cubes_at_level(self, level: int) -> int:
        return self.cubes_per_axis(level) ** self.dimension

    @property
    def n_leaves(self) -> int:
        return self.n_cubes_at_level(self.leaf)

    @property
    def n_cubes(self) -> int:
        return sum(self.n_cubes_at_level(l) for l in self.levels)

    @property
    def grid_shape(self) -> tuple[int, ...]:
        n = self.cubes_per_axis(self.leaf)
        return (n,) * self.dimension

    def side(self, level: int) -> float:
        return 2.0 ** (-level)

    def volume(self, level: int) -> float:
        return 2.0 ** (-level * self.dimension)

    # -- cube validity and navigation ------------------------------------

    def check_cube(self, cube: Cube) -> None:
        if cube.dimension != self.dimension:
            raise DomainMismatchError(
                f"cube dimension {cube.dimension} != lattice dimension {self.dimension}"
            )
        self.check_level(cube.level)
        n = self.cubes_per_axis(cube.level)
        for c in cube.coords:
            if not (0 <= c < n):
                raise DomainMismatchError(f"cube {cube} outside lattice")

    def is_leaf(self, cube: Cube) -> bool:
        return cube.level == self.leaf

    def parent(self, cube: Cube) -> Cube:
        self.check_cube(cube)
        if cube.level == -self.top:
            raise ValueError("root cube has no parent inside the lattice")
        return Cube(cube.level - 1, tuple(c >> 1 for c in cube.coords))

    def ancestor(self, cube: Cube, r: int) -> Cube:
        """The r-fold parent; defined only while level - r stays >= -top."""
        self.check_cube(cube)
        if r < 0:
            raise ValueError("ancestor order must be nonnegative")
        if cube.level - r < -self.top:
            raise ValueError(f"ancestor of order {r} leaves the lattice")
        return Cube(cube.level - r, tuple(c >> r for c in cube.coords))

    def children(self, cube: Cube) -> list[Cube]:
        return self.descendants(cube, 1)

    def descendants(self, cube: Cube, depth: int) -> list[Cube]:
        """All cubes m = depth levels below, in row-major order (2**(N*depth) of them)."""
        self.check_cube(cube)
        if depth < 0:
            raise ValueError("descendant depth must be nonnegative")
        if cube.level + depth > self.leaf:
            raise ValueError("descendant depth overflows the leaf level")
        if depth == 0:
            return [cube]
        side = 1 << depth
        base = tuple(c << depth for c in cube.coords)
        out = []
        for flat in range(side**self.dimension):
            rem = flat
            offs = []
            for _ in range(self.dimension):
                offs.append(rem % side)
                rem //= side
            offs.reverse()
            out.append(
                Cube(cube.level + depth, tuple(b + o for b, o in zip(base, offs)))
            )
        return out

    def child_index(self, cube: Cube) -> int:
        """Row-major position of ``cube`` among its parent's 2**dimension children."""
        self.check_cube(cube)
        if cube.level == -self.top:
            raise ValueError("root cube has no parent")
        idx = 0
        for c in cube.coords:
            idx = (idx << 1) | (c & 1)
        return idx

    def contains(self, cube: Cube, other: Cube) -> bool:
        """True when ``other`` is a (weak) descendant of ``cube``."""
        self.check_cube(cube)
        self.check_cube(other)
        if other.level < cube.level:
            return False
        shift = other.level - cube.level
        return all(o >> shift == c for c, o in zip(cube.coords, other.coords))

    def cubes_at_level(self, level: int) -> Iterator[Cube]:
        n = self.cubes_per_axis(level)
        for flat in range(n**self.dimension):
            rem = flat
            coords = []
            for _ in range(self.dimension):
                coords.append(rem % n)
                rem //= n
            coords.reverse()
            yield Cube(level, tuple(coords))

    def cubes(self) -> Iterator[Cube]:
        """All cubes, coarse to fine, row-major within each level."""
        for level in self.levels:
            yield from self.cubes_at_level(level)

    # -- canonical enumeration -------------------------------------------

    def level_offset(self, level: int) -> int:
        self.check_level(level)
        return sum(self.n_cubes_at_level(l) for l in range(-self.top, level))

    def flat_coords(self, cube: Cube) -> int:
        """Row-major index of the cube within its own level."""
        n = self.cubes_per_axis(cube.level)
        flat = 0
        for c in cube.coords:
            flat = flat * n + c
        return flat

    def cube_index(self, cube: Cube) -> int:
        """Canonical index over all cubes: levels coarse to fine, row-major inside."""
        self.check_cube(cube)
        return self.level_offset(cube.level) + self.flat_coords(cube)

    def cube_from_index(self, index: int) -> Cube:
        if index < 0:
            raise ValueError("cube index must be nonnegative")
        for level in self.levels:
            count = self.n_cubes_at_level(level)
            if index < count:
                n = self.cubes_per_axis(level)
                rem = index
                coords = []
                for _ in range(self.dimension):
                    coords.append(rem % n)
                    rem //= n
                coords.reverse()
                return Cube(level, tuple(coords))
            index -= count
        raise ValueError("cube index out of range")

    # -- leaf-grid access --------------------------------------------------

    def leaves_per_axis(self, level: int) -> int:
        """Leaf cells spanned per axis by a cube at ``level``."""
        self.check_level(level)
        return 1 << (self.leaf - level)

    def leaf_slices(self, cube: Cube) -> tuple[slice, ...]:
        """Slices selecting the cube's block inside the N-d leaf grid."""
        self.check_cube(cube)
        s = self.leaves_per_axis(cube.level)
        return tuple(slice(c * s, (c + 1) * s) for c in cube.coords)

    def leaf_indices(self, cube: Cube) -> np.ndarray:
        """Flat row-major leaf indices under the cube."""
        self.check_cube(cube)
        s = self.leaves_per_axis(cube.level)
        n = self.cubes_per_axis(self.leaf)
        axes = [np.arange(c * s, (c + 1) * s) for c in cube.coords]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.ravel_multi_index(mesh, (n,) * self.dimension).ravel()

    def leaf_cube(self, flat_index: int) -> Cube:
        n = self.cubes_per_axis(self.leaf)
        if not (0 <= flat_index < self.n_leaves):
            raise ValueError("leaf index out of range")
        coords = []
        rem = int(flat_index)
        for _ in range(self.dimension):
            coords.append(rem % n)
            rem //= n
        coords.reverse()
        return Cube(self.leaf, tuple(coords))

    # -- level aggregation (the workhorse for subtree sums) ----------------

    def sum_to_level(self, leaf_values: np.ndarray, level: int) -> np.ndarray:
        """Sum a flat leaf array over each cube at ``level`` (flat row-major out)."""
        self.check_level(level)
        n = self.cubes_per_axis(level)
        s = self.leaves_per_axis(level)
        if s == 1:
            return np.asarray(leaf_values, dtype=float).reshape(-1).copy()
        shape = []
        for _ in range(self.dimension):
            shape.extend((n, s))
        a = np.asarray(leaf_values, dtype=float).reshape(shape)
        axes = tuple(range(1, 2 * self.dimension, 2))
        return a.sum(axis=axes).ravel()

    def spread_from_level(self, cube_values: np.ndarray, level: int) -> np.ndarray:
        """Broadcast one value per cube at ``level`` to every leaf under it."""
        self.check_level(level)
        n = self.cubes_per_axis(level)
        s = self.leaves_per_axis(level)
        vals = np.asarray(cube_values, dtype=float).reshape((n,) * self.dimension)
        if s == 1:
            return vals.ravel().copy()
        for axis in range(self.dimension):
            vals = np.repeat(vals, s, axis=axis)
        return vals.ravel()
