import numpy as np
import pytest

from dyadlab.constants import (
    indicator_assignment_vector,
    one_weight_pack,
    positive_mass_cubes,
    quadratic_constant,
    quadratic_constant_disjoint,
    quadratic_constant_weighted,
    r_bound,
    r_bound_instance_value,
    shift_testing_constant,
    simple_constant,
    square_testing_constant,
    stein_constant,
    two_weight_norm,
)
from dyadlab.constants import testing_instance_value as replay_testing_value
from dyadlab.functions import ExponentPair, Measure, cube_measure
from dyadlab.lattice import Cube, DyadicLattice
from dyadlab.shifts import (
    SquareFunctionSpec,
    adjoint_spec,
    generate_random_shift,
)

PQ22 = ExponentPair(2.0, 2.0)


def _pair(lat, seed, zero_fraction=0.0):
    rng = np.random.default_rng(seed)
    s = rng.uniform(0.1, 2.0, lat.n_leaves)
    t = rng.uniform(0.1, 2.0, lat.n_leaves)
    if zero_fraction:
        s[rng.random(lat.n_leaves) < zero_fraction] = 0.0
        t[rng.random(lat.n_leaves) < zero_fraction] = 0.0
    return Measure(lat, s), Measure(lat, t)


def test_simple_constant_by_hand():
    lat = DyadicLattice(1, 0, 1)
    sigma = Measure(lat, [4.0, 0.0])
    w = Measure(lat, [9.0, 0.0])
    pq = ExponentPair(2.0, 2.0)
    # candidates: root (sigma=4, w=9, vol=1) and left leaf (vol=1/2)
    root_val = 4.0**0.5 * 9.0**0.5 / 1.0
    leaf_val = 4.0**0.5 * 9.0**0.5 / 0.5
    est = simple_constant(sigma, w, pq)
    assert est.kind == "exact"
    assert est.value == pytest.approx(max(root_val, leaf_val))
    assert "0" in est.witness["cube"] or "1" in est.witness["cube"]


def test_simple_constant_dual_swap_is_exact():
    lat = DyadicLattice(2, 1, 2)
    sigma, w = _pair(lat, 1, zero_fraction=0.2)
    for pq in (PQ22, ExponentPair(1.5, 3.0), ExponentPair(3.0, 1.5)):
        a = simple_constant(sigma, w, pq).value
        b = simple_constant(w, sigma, pq.swapped_dual()).value
        assert a == b  # identical arithmetic per cube, exact in floats


def test_simple_mismatched_lattices():
    a = DyadicLattice(1, 0, 2)
    b = DyadicLattice(1, 1, 2)
    with pytest.raises(ValueError):
        simple_constant(Measure.lebesgue(a), Measure.lebesgue(b), PQ22)


def test_positive_mass_cubes_order_and_filter():
    lat = DyadicLattice(1, 1, 2)
    mass = np.zeros(lat.n_leaves)
    mass[0] = 1.0
    m = Measure(lat, mass)
    cubes = positive_mass_cubes(m)
    levels = [c.level for c in cubes]
    assert levels == sorted(levels)  # coarse to fine
    assert all(cube_measure(m, c) > 0 for c in cubes)
    assert len(cubes) == len(list(lat.levels))  # one chain down to the hot leaf
    non_leaf = positive_mass_cubes(m, non_leaf_only=True)
    assert all(c.level < lat.leaf for c in non_leaf)


@pytest.mark.parametrize(
    "pq", [PQ22, ExponentPair(1.5, 2.0), ExponentPair(2.0, 4.0), ExponentPair(1.5, 3.0)]
)
def test_quadratic_floors_at_simple(pq):
    lat = DyadicLattice(1, 1, 3)
    sigma, w = _pair(lat, 7, zero_fraction=0.2)
    s = simple_constant(sigma, w, pq)
    quad = quadratic_constant(sigma, w, pq, restarts=2, seed=0)
    assert quad.value >= s.value * (1 - 1e-12)
    assert quad.diagnostics["single_cube_floor"] == pytest.approx(s.value, rel=1e-9)
    # the witness replays: coefficients are squared variables over the pool
    labels = quad.witness["labels"]
    assert len(labels) == len(quad.witness["coefficients"])


def test_quadratic_respects_cube_restriction():
    lat = DyadicLattice(1, 0, 2)
    sigma, w = _pair(lat, 3)
    only_root = quadratic_constant(sigma, w, PQ22, restarts=1, seed=0, cubes=[lat.root])
    # single cube: the problem is 1-dimensional, value equals that single
    sig = sigma.total()
    expected = (sig / lat.root.volume()) * w.total() ** 0.5 / sig**0.5
    assert only_root.value == pytest.approx(expected, rel=1e-12)
    empty = quadratic_constant(sigma, w, PQ22, cubes=[])
    assert empty.value == 0.0


def test_quadratic_symmetry_under_dual_swap():
    lat = DyadicLattice(1, 0, 2)
    sigma, w = _pair(lat, 11)
    pq = ExponentPair(1.5, 3.0)
    a = quadratic_constant(sigma, w, pq, restarts=6, seed=0)
    b = quadratic_constant(w, sigma, pq.swapped_dual(), restarts=6, seed=1)
    # the single-cube floors agree exactly; optimized values within the bracket
    assert a.diagnostics["single_cube_floor"] == pytest.approx(
        b.diagnostics["single_cube_floor"], rel=1e-9
    )
    assert 0.5 <= a.value / b.value <= 2.0


def test_quadratic_weighted_zero_spec():
    lat = DyadicLattice(1, 0, 2)
    sigma, w = _pair(lat, 4)
    empty = quadratic_constant_weighted(SquareFunctionSpec(lat, ()), sigma, w, PQ22)
    assert empty.value == 0.0
    bspec = SquareFunctionSpec.from_dict(lat, {lat.root: 2.0})
    est = quadratic_constant_weighted(bspec, sigma, w, PQ22, restarts=1, seed=0)
    plain = quadratic_constant(sigma, w, PQ22, restarts=1, seed=0, cubes=[lat.root])
    assert est.value == pytest.approx(2.0 * plain.value, rel=1e-9)


def test_quadratic_disjoint_children():
    lat = DyadicLattice(1, 1, 3)
    sigma, w = _pair(lat, 5, zero_fraction=0.15)
    est = quadratic_constant_disjoint(sigma, w, PQ22, restarts=2, seed=0)
    assert est.value >= 0.0
    assert set(est.diagnostics["per_pair"]) == {"0->1", "1->0"}
    assert "dual_value" in est.diagnostics
    no_dual = quadratic_constant_disjoint(sigma, w, PQ22, restarts=2, seed=0, with_dual=False)
    assert "dual_value" not in no_dual.diagnostics
    assert no_dual.value == est.value


def test_stein_dominates_quadratic_via_indicators():
    lat = DyadicLattice(1, 0, 3)
    sigma, w = _pair(lat, 9, zero_fraction=0.1)
    cubes = positive_mass_cubes(sigma)
    quad = quadratic_constant(sigma, w, PQ22, restarts=2, seed=0, cubes=cubes)
    b = np.maximum(np.asarray(quad.witness["coefficients"]), 0.0)
    extra = [("glued", indicator_assignment_vector(sigma, cubes, np.sqrt(b)))]
    stein = stein_constant(
        sigma, w, PQ22, cubes=cubes, restarts=2, seed=0, extra_starts=extra
    )
    assert stein.value >= quad.value * (1 - 1e-12)


def test_indicator_assignment_vector_layout():
    lat = DyadicLattice(1, 0, 1)
    sigma = Measure(lat, [1.0, 2.0])
    cubes = [lat.root, Cube(1, (0,))]
    vec = indicator_assignment_vector(sigma, cubes, np.array([3.0, 5.0]))
    # concatenated per-cube leaf blocks: root has 2 leaves, the child 1
    assert np.allclose(vec, [3.0, 3.0, 5.0])


def test_two_weight_norm_spectral_exact_at_22():
    lat = DyadicLattice(1, 1, 3)
    sigma, w = _pair(lat, 13, zero_fraction=0.2)
    shift = generate_random_shift(lat, 1, 2, density=0.7, seed=21)
    spectral = two_weight_norm(shift, sigma, w, PQ22, method="spectral")
    assert spectral.kind == "exact"
    functional = two_weight_norm(shift, sigma, w, PQ22, method="functional", restarts=6, seed=0)
    assert functional.kind == "lower-bound"
    assert functional.value == pytest.approx(spectral.value, rel=1e-6)
    assert functional.value <= spectral.value * (1 + 1e-9)
    auto = two_weight_norm(shift, sigma, w, PQ22, method="auto")
    assert auto.value == spectral.value


def test_two_weight_norm_off_22_is_lower_bound():
    lat = DyadicLattice(1, 0, 2)
    sigma, w = _pair(lat, 14)
    shift = generate_random_shift(lat, 0, 1, density=0.8, seed=3)
    pq = ExponentPair(1.5, 3.0)
    est = two_weight_norm(shift, sigma, w, pq, restarts=3, seed=0)
    assert est.kind == "lower-bound"
    with pytest.raises(ValueError):
        two_weight_norm(shift, sigma, w, pq, method="spectral")


def test_testing_constant_below_r_bound():
    lat = DyadicLattice(1, 1, 3)
    sigma, w = _pair(lat, 17, zero_fraction=0.2)
    family = [
        generate_random_shift(lat, 1, 1, density=0.5, seed=31),
        generate_random_shift(lat, 0, 1, density=0.5, seed=32),
    ]
    pq = ExponentPair(2.0, 2.0)
    t = shift_testing_constant(family, sigma, w, pq, restarts=2, seed=0)
    r = r_bound(family, sigma, w, pq, restarts=2, seed=0)
    assert t.value <= r.value * (1 + 1e-9)
    # every sampled instance replays to its recorded value
    for inst in t.diagnostics["sampled_instances"][:5]:
        replay = replay_testing_value(
            family, sigma, w, pq, inst["members"], inst["cubes"], inst["squared_coefficients"]
        )
        assert replay == pytest.approx(inst["value"], rel=1e-9)


def test_testing_dual_direction():
    lat = DyadicLattice(1, 0, 2)
    sigma, w = _pair(lat, 19)
    family = [generate_random_shift(lat, 1, 1, density=0.7, seed=41)]
    pq = ExponentPair(1.5, 3.0)
    direct = shift_testing_constant(family, sigma, w, pq, direction="direct", restarts=1, seed=0)
    dual = shift_testing_constant(family, sigma, w, pq, direction="dual", restarts=1, seed=0)
    assert direct.diagnostics["direction"] == "direct"
    assert dual.diagnostics["direction"] == "dual"
    # the dual direction is the direct testing constant of the adjoint family
    manual = shift_testing_constant(
        [adjoint_spec(s) for s in family],
        w,
        sigma,
        pq.swapped_dual(),
        direction="direct",
        restarts=1,
        seed=0,
    )
    assert dual.value == pytest.approx(manual.value, rel=1e-12)
    with pytest.raises(ValueError):
        shift_testing_constant(family, sigma, w, pq, direction="sideways")


def test_r_bound_extra_instances_and_replay():
    lat = DyadicLattice(1, 0, 2)
    sigma, w = _pair(lat, 23)
    family = [generate_random_shift(lat, 1, 1, density=0.9, seed=51)]
    pq = ExponentPair(2.0, 2.0)
    stack = np.ones((1, lat.n_leaves))
    base = r_bound(family, sigma, w, pq, restarts=1, seed=0)
    seeded_value = r_bound_instance_value(family, sigma, w, pq, [0], stack)
    est = r_bound(
        family, sigma, w, pq, restarts=1, seed=0, extra_instances=[("probe", [0], stack)]
    )
    assert est.value >= seeded_value * (1 - 1e-12)
    assert est.value >= base.value * (1 - 1e-12)
    assert "probe" in est.diagnostics["per_selection"]
    # the recorded witness replays to the reported value
    wit = est.witness
    stacked = np.asarray(wit["coefficients"], dtype=float).reshape(
        len(wit["members"]), lat.n_leaves
    )
    replay = r_bound_instance_value(family, sigma, w, pq, wit["members"], stacked)
    assert replay == pytest.approx(est.value, rel=1e-9)


def test_square_testing_local_below_global():
    lat = DyadicLattice(1, 1, 3)
    sigma, w = _pair(lat, 29, zero_fraction=0.1)
    bspec = SquareFunctionSpec.constant(lat, 1.0)
    pq = ExponentPair(1.5, 2.0)
    loc = square_testing_constant(bspec, sigma, w, pq, scope="local", restarts=2, seed=0)
    glob = square_testing_constant(bspec, sigma, w, pq, scope="global", restarts=2, seed=0)
    assert loc.diagnostics["scope"] == "local"
    assert glob.diagnostics["scope"] == "global"
    assert loc.value <= glob.value * (1 + 1e-9)
    with pytest.raises(ValueError):
        square_testing_constant(bspec, sigma, w, pq, scope="континент")


def test_one_weight_pack_by_hand():
    lat = DyadicLattice(1, 0, 1)
    w = Measure(lat, [2.0, 8.0])  # densities 4 and 16
    pack = one_weight_pack(w, 2.0)
    # dual density is 1/density: masses 1/8, 1/32
    assert np.allclose(pack.dual.mass, [0.5 * 0.25, 0.5 * 0.0625])
    # characteristic: sup of dual(Q) * w(Q) / |Q|^2 over the three cubes
    cands = {
        "root": (0.125 + 0.03125) * 10.0 / 1.0,
        "left": 0.125 * 2.0 / 0.25,
        "right": 0.03125 * 8.0 / 0.25,
    }
    assert pack.characteristic == pytest.approx(max(cands.values()))
    assert pack.p == 2.0
    with pytest.raises(ValueError):
        one_weight_pack(Measure(lat, [1.0, 0.0]), 2.0)
    with pytest.raises(ValueError):
        one_weight_pack(w, 1.0)


def test_one_weight_p2_stein_identity():
    lat = DyadicLattice(1, 0, 3)
    rng = np.random.default_rng(31)
    w = Measure(lat, rng.uniform(0.2, 5.0, lat.n_leaves))
    pack = one_weight_pack(w, 2.0)
    target = pack.characteristic**0.5
    cubes = positive_mass_cubes(pack.dual)
    quad = quadratic_constant(pack.dual, w, PQ22, restarts=2, seed=0, cubes=cubes)
    b = np.maximum(np.asarray(quad.witness["coefficients"]), 0.0)
    extra = [("glued", indicator_assignment_vector(pack.dual, cubes, np.sqrt(b)))]
    est = stein_constant(
        pack.dual, w, PQ22, cubes=cubes, restarts=2, seed=0, extra_starts=extra
    )
    assert est.value == pytest.approx(target, rel=1e-6)
    assert est.value <= target * (1 + 1e-9)
