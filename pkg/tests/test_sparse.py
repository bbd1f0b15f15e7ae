import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyadlab.functions import ExponentPair, Measure, StepFunction, average, lp_norm
from dyadlab.lattice import Cube, DyadicLattice
from dyadlab.sparse import (
    carleson_check,
    dyadic_maximal,
    principal_cubes,
    stein_check,
    verify_sparse,
)


def _random_pair(lat, seed, zero_fraction=0.0):
    rng = np.random.default_rng(seed)
    mass = rng.uniform(0.1, 2.0, lat.n_leaves)
    if zero_fraction:
        mass[rng.random(lat.n_leaves) < zero_fraction] = 0.0
    return StepFunction(lat, rng.normal(size=lat.n_leaves)), Measure(lat, mass)


def test_principal_cubes_flat_function_stops_nowhere():
    lat = DyadicLattice(1, 0, 3)
    m = Measure.lebesgue(lat)
    family = principal_cubes(StepFunction.ones(lat), m)
    assert family.cubes == [lat.root]
    assert family.stopping_children(lat.root) == []


def test_principal_cubes_spike():
    lat = DyadicLattice(1, 0, 3)
    m = Measure.lebesgue(lat)
    values = np.zeros(lat.n_leaves)
    values[0] = 100.0
    family = principal_cubes(StepFunction(lat, values), m)
    # the spike forces a chain of stopping cubes down to the hot leaf
    assert len(family.cubes) > 1
    ok, fractions = verify_sparse(family, m, gamma=0.5)
    assert ok
    assert all(frac >= 0.5 - 1e-12 for frac in fractions.values())


@settings(max_examples=30, deadline=None)
@given(
    dim=st.integers(1, 2),
    leaf=st.integers(1, 3),
    seed=st.integers(0, 100_000),
)
def test_principal_cubes_always_half_sparse(dim, leaf, seed):
    lat = DyadicLattice(dim, 0, leaf)
    f, m = _random_pair(lat, seed, zero_fraction=0.25)
    family = principal_cubes(f, m)
    ok, _ = verify_sparse(family, m, gamma=0.5)
    assert ok


@settings(max_examples=30, deadline=None)
@given(dim=st.integers(1, 2), leaf=st.integers(1, 3), seed=st.integers(0, 100_000))
def test_container_average_control(dim, leaf, seed):
    lat = DyadicLattice(dim, 0, leaf)
    f, m = _random_pair(lat, seed, zero_fraction=0.2)
    abs_f = StepFunction(lat, np.abs(f.values))
    family = principal_cubes(f, m)
    for cube in lat.cubes():
        container = family.container(cube)
        assert lat.contains(container, cube)
        assert average(abs_f, m, cube) <= 2.0 * average(abs_f, m, container) + 1e-12


def test_container_rejects_outside_cube():
    lat = DyadicLattice(1, 1, 2)
    f, m = _random_pair(lat, 3)
    family = principal_cubes(f, m, root=Cube(0, (0,)))
    with pytest.raises(ValueError):
        family.container(Cube(0, (1,)))


def test_exceptional_sets_disjoint():
    lat = DyadicLattice(1, 0, 4)
    f, m = _random_pair(lat, 9)
    family = principal_cubes(f, m)
    total = np.zeros(lat.grid_shape, dtype=int)
    for cube in family.cubes:
        total += family.exceptional_mask(cube).astype(int)
    assert np.max(total) <= 1


def test_verify_sparse_flags_overcrowded_family():
    from dyadlab.sparse import SparseFamily

    lat = DyadicLattice(1, 0, 1)
    m = Measure.lebesgue(lat)
    family = SparseFamily(lattice=lat, root=lat.root)
    family.children[lat.root] = lat.children(lat.root)  # children cover everything
    for kid in lat.children(lat.root):
        family.children[kid] = []
    ok, fractions = verify_sparse(family, m, gamma=0.5)
    assert not ok
    assert fractions[lat.root] == pytest.approx(0.0)


def test_dyadic_maximal_dominates_and_is_attained():
    lat = DyadicLattice(1, 1, 3)
    f, m = _random_pair(lat, 4, zero_fraction=0.2)
    mx = dyadic_maximal(f, m)
    abs_f = StepFunction(lat, np.abs(f.values))
    for cube in lat.cubes():
        idx = lat.leaf_indices(cube)
        assert np.all(mx.values[idx] >= average(abs_f, m, cube) - 1e-12)
    live = m.mass > 0
    assert np.all(mx.values[live] >= np.abs(f.values[live]) - 1e-12)


def test_carleson_check_shapes():
    lat = DyadicLattice(1, 0, 2)
    f, m = _random_pair(lat, 6)
    g, _ = _random_pair(lat, 7)
    fam_f = principal_cubes(f, m)
    fam_g = principal_cubes(g, m)
    lhs, rhs = carleson_check([fam_f, fam_g], [f, g], m, 2.0)
    assert lhs >= 0 and rhs > 0
    with pytest.raises(ValueError):
        carleson_check([fam_f], [f, g], m, 2.0)
    assert carleson_check([], [], m, 2.0) == (0.0, 0.0)


def test_stein_check_single_cube_identity():
    lat = DyadicLattice(1, 0, 2)
    rng = np.random.default_rng(8)
    sigma = Measure(lat, rng.uniform(0.1, 1.0, lat.n_leaves))
    w = Measure(lat, rng.uniform(0.1, 1.0, lat.n_leaves))
    pq = ExponentPair(2.0, 2.0)
    cube = Cube(1, (0,))
    f = StepFunction.indicator(lat, cube)
    lhs, rhs = stein_check([(cube, f)], sigma, w, pq)
    sig = sum(sigma.mass[lat.leaf_indices(cube)])
    wm = sum(w.mass[lat.leaf_indices(cube)])
    assert lhs == pytest.approx((sig / cube.volume()) * np.sqrt(wm))
    assert rhs == pytest.approx(np.sqrt(sig))
    assert stein_check([], sigma, w, pq) == (0.0, 0.0)
