"""Acceptance checks: one test per advertised guarantee, at its stated tolerance.

Run ``pytest tests/test_acceptance.py -v`` to get one pass/fail line per
guarantee.  Every test seeds its own randomness, so the file is deterministic
end to end; the runtime-budgeted tests also assert their wall-clock budget.
"""

import os
import subprocess
import sys
import time

import numpy as np

from dyadlab.constants import (
    quadratic_constant,
    r_bound,
    r_bound_instance_value,
    shift_testing_constant,
    simple_constant,
    square_testing_constant,
    two_weight_norm,
)
from dyadlab.experiments import (
    _testing_replays,
    counterexample_growth,
    one_weight_stein_experiment,
    random_measure,
    random_shift_family,
    random_square_spec,
    random_step_function,
    verify_lower_bound_lemma,
    verify_shift_theorem,
    verify_square_theorem,
)
from dyadlab.functions import ExponentPair, StepFunction, integrate, pairing
from dyadlab.lattice import DyadicLattice
from dyadlab.martingale import expand
from dyadlab.ratio import AscentOptions
from dyadlab.shifts import adjoint_spec, apply_block, apply_shift, generate_random_shift
from dyadlab.sparse import principal_cubes, verify_sparse


def test_01_exact_identities_reconstruction_adjoint_domination():
    """Martingale reconstruction and the shift adjoint identity hold to 1e-12
    relative on 200 random instances, and every generated block is dominated
    pointwise by the averaged input; all of it inside a 30 s budget."""
    t0 = time.monotonic()
    for i in range(200):
        rng = np.random.default_rng((1001, i))
        lat = DyadicLattice(1, 0, 1 + i % 6)
        sigma = random_measure(lat, rng)
        f = random_step_function(lat, rng)

        recon = expand(f, sigma).reconstruct()
        live = sigma.mass > 0
        assert np.allclose(recon.values[live], f.values[live], rtol=1e-12, atol=1e-12), (
            f"instance {i}: reconstruction deviates beyond 1e-12"
        )

        w = random_measure(lat, rng)
        depth_hi = min(2, lat.leaf)
        spec = generate_random_shift(
            lat,
            int(rng.integers(0, depth_hi + 1)),
            int(rng.integers(0, depth_hi + 1)),
            density=0.7,
            seed=int(rng.integers(0, 2**31)),
        )
        g = random_step_function(lat, rng)
        lhs = pairing(apply_shift(spec, f, sigma), g, w)
        rhs = pairing(f, apply_shift(adjoint_spec(spec), g, w), sigma)
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs), abs(rhs)), (
            f"instance {i}: adjoint pairing mismatch {lhs} vs {rhs}"
        )

        abs_f = StepFunction(lat, np.abs(f.values))
        for block in spec.blocks:
            out = apply_block(block, spec, f, sigma).values
            idxs = lat.leaf_indices(block.cube)
            bound = integrate(abs_f.restrict(block.cube), sigma) / block.cube.volume()
            inside = np.zeros(lat.n_leaves, dtype=bool)
            inside[idxs] = True
            assert np.all(np.abs(out[idxs]) <= bound * (1.0 + 1e-12) + 1e-15), (
                f"instance {i}: block {block.cube} exceeds its averaged-input bound"
            )
            assert np.all(out[~inside] == 0.0), (
                f"instance {i}: block {block.cube} leaks outside its cube"
            )
    elapsed = time.monotonic() - t0
    assert elapsed < 30.0, f"exactness suite took {elapsed:.1f}s, budget is 30s"


def test_02_functional_norm_matches_dense_oracle():
    """At p = q = 2 on lattices of at most 2^8 leaves, the functional
    ratio-maximization estimate of the operator norm agrees with the dense
    singular-value oracle to 1e-6 relative on 100 random instances, within a
    2 minute budget."""
    pq = ExponentPair(2.0, 2.0)
    opts = AscentOptions(max_iterations=80, patience=10, structured_ascents=1)
    t0 = time.monotonic()
    worst = 0.0
    for i in range(100):
        rng = np.random.default_rng((1002, i))
        kind = i % 4
        if kind == 0:
            lat = DyadicLattice(1, 1, 7)  # 256 leaves
        elif kind == 1:
            lat = DyadicLattice(2, 1, 3)  # 256 leaves
        elif kind == 2:
            lat = DyadicLattice(1, 0, 7)  # 128 leaves
        else:
            lat = DyadicLattice(1, 1, 5)  # 64 leaves
        zero_fraction = 0.15 if i % 5 == 0 else 0.0
        sigma = random_measure(lat, rng, zero_fraction=zero_fraction)
        w = random_measure(lat, rng, zero_fraction=zero_fraction)
        spec = generate_random_shift(
            lat,
            int(rng.integers(0, 3)),
            int(rng.integers(0, 3)),
            density=0.6,
            seed=int(rng.integers(0, 2**31)),
        )
        oracle = two_weight_norm(spec, sigma, w, pq, method="spectral")
        est = two_weight_norm(
            spec, sigma, w, pq, method="functional", restarts=1, seed=i, options=opts
        )
        rel = abs(est.value - oracle.value) / max(oracle.value, 1e-300)
        worst = max(worst, rel)
        assert rel <= 1e-6, (
            f"instance {i} ({lat.n_leaves} leaves): functional {est.value} vs "
            f"oracle {oracle.value}, relative gap {rel:.3g}"
        )
    elapsed = time.monotonic() - t0
    assert elapsed < 120.0, f"oracle-agreement suite took {elapsed:.1f}s, budget is 2min"


def test_03_coefficient_constant_collapses_to_simple():
    """For exponents with p <= 2 <= q, the coefficient-family estimate lands in
    [simple, simple*(1+1e-9)] on 50 random measure pairs per exponent pair, and
    its single-cube floor witness attains the value."""
    pairs = [
        ExponentPair(2.0, 2.0),
        ExponentPair(1.5, 2.0),
        ExponentPair(2.0, 4.0),
        ExponentPair(1.5, 3.0),
    ]
    for pi, pq in enumerate(pairs):
        for i in range(50):
            rng = np.random.default_rng((1003, pi, i))
            lat = DyadicLattice(1, 1, 2 + (i % 2)) if i % 3 else DyadicLattice(2, 0, 2)
            sigma = random_measure(lat, rng)
            w = random_measure(lat, rng)
            simple = simple_constant(sigma, w, pq)
            quad = quadratic_constant(sigma, w, pq, restarts=2, seed=1000 * pi + i)
            assert quad.value >= simple.value, (
                f"pair {pq.p},{pq.q} instance {i}: estimate {quad.value} fell "
                f"below the simple constant {simple.value}"
            )
            assert quad.value <= simple.value * (1.0 + 1e-9), (
                f"pair {pq.p},{pq.q} instance {i}: estimate {quad.value} exceeds "
                f"simple*(1+1e-9) with simple {simple.value}"
            )
            floor = quad.diagnostics["single_cube_floor"]
            assert abs(floor - simple.value) <= 1e-12 * simple.value
            assert abs(quad.value - floor) <= 1e-9 * max(floor, 1e-300), (
                f"pair {pq.p},{pq.q} instance {i}: single-cube witness {floor} "
                f"does not attain the estimate {quad.value}"
            )


def test_04_counterexample_growth_and_mirrored_dual():
    """The corner-versus-annuli construction keeps the simple constant bounded
    (max/min <= 1.05) while the coefficient estimate diverges: the ratio is
    strictly increasing in the truncation depth and the fitted log-log slope of
    the structured profile sits within 0.05 of 1/q - 1/2.  The dual exponent
    run passes the mirrored check, all within a 1 minute budget."""
    t0 = time.monotonic()
    ks = (4, 8, 16, 32, 64)

    direct = counterexample_growth(1, ExponentPair(2.0, 1.5), k_values=ks, restarts=6, seed=0)
    assert direct.passed(), f"direct run failed checks: {direct.checks}"
    assert direct.summary["simple_max_over_min"] <= 1.05
    ratios = direct.summary["quad_over_simple"]
    assert all(a < b for a, b in zip(ratios, ratios[1:])), (
        f"estimate/simple ratios not strictly increasing: {ratios}"
    )
    assert abs(direct.summary["fitted_slope"] - (1.0 / 1.5 - 0.5)) <= 0.05, (
        f"slope {direct.summary['fitted_slope']} misses 1/6 by more than 0.05"
    )

    dual = counterexample_growth(1, ExponentPair(4.0, 2.0), k_values=ks, restarts=6, seed=0)
    assert dual.passed(), f"dual run failed checks: {dual.checks}"
    assert dual.config["swapped"] is True
    assert dual.summary["simple_max_over_min"] <= 1.05
    dual_ratios = dual.summary["quad_over_simple"]
    assert all(a < b for a, b in zip(dual_ratios, dual_ratios[1:]))
    assert abs(dual.summary["fitted_slope"] - 0.25) <= 0.05, (
        f"dual slope {dual.summary['fitted_slope']} misses 1/4 by more than 0.05"
    )

    elapsed = time.monotonic() - t0
    assert elapsed < 60.0, f"growth runs took {elapsed:.1f}s, budget is 1min"


def test_05_testing_values_never_exceed_r_bound():
    """On 100 random shift-family instances spread over four exponent pairs,
    every sampled quadratic-testing value stays below the witness-validated
    r-bound estimate, every local square-testing value stays below the global
    one, and the simple constant stays below the coefficient estimate.  Zero
    violations tolerated."""
    pairs = [
        ExponentPair(1.5, 1.5),
        ExponentPair(2.0, 2.0),
        ExponentPair(3.0, 2.0),
        ExponentPair(2.0, 3.0),
    ]
    opts = AscentOptions(max_iterations=120, patience=12, structured_ascents=2)
    for pi, pq in enumerate(pairs):
        for i in range(25):
            rng = np.random.default_rng((1005, pi, i))
            lat = DyadicLattice(1, 1, 2) if i % 2 else DyadicLattice(1, 0, 3)
            sigma = random_measure(lat, rng)
            w = random_measure(lat, rng)
            family = random_shift_family(lat, rng, count=2, max_depth=2, density=0.6)

            t_est = shift_testing_constant(
                family, sigma, w, pq, restarts=1, seed=3000 + 100 * pi + i, options=opts
            )
            rb = r_bound(
                family,
                sigma,
                w,
                pq,
                restarts=1,
                seed=4000 + 100 * pi + i,
                options=opts,
                extra_instances=_testing_replays(t_est, lat),
            )
            members = rb.witness["members"]
            stacked = np.asarray(rb.witness["coefficients"], dtype=float).reshape(
                len(members), -1
            )
            validated = r_bound_instance_value(family, sigma, w, pq, members, stacked)
            assert abs(validated - rb.value) <= 1e-9 * max(1.0, rb.value), (
                f"pair {pq.p},{pq.q} instance {i}: r-bound witness replays to "
                f"{validated}, reported {rb.value}"
            )
            for inst in t_est.diagnostics["sampled_instances"]:
                assert inst["value"] <= validated * (1.0 + 1e-9), (
                    f"pair {pq.p},{pq.q} instance {i}: testing value "
                    f"{inst['value']} exceeds the validated r-bound {validated}"
                )

            bspec = random_square_spec(lat, rng, density=0.7)
            loc = square_testing_constant(
                bspec, sigma, w, pq, scope="local", restarts=1, seed=5000 + i, options=opts
            )
            extra = (
                [("local-witness", np.asarray(loc.witness["coefficients"], dtype=float))]
                if loc.witness is not None
                else []
            )
            glob = square_testing_constant(
                bspec,
                sigma,
                w,
                pq,
                scope="global",
                restarts=1,
                seed=6000 + i,
                options=opts,
                extra_starts=extra,
            )
            assert loc.value <= glob.value * (1.0 + 1e-9), (
                f"pair {pq.p},{pq.q} instance {i}: local testing {loc.value} "
                f"exceeds global {glob.value}"
            )

            simple = simple_constant(sigma, w, pq)
            quad = quadratic_constant(sigma, w, pq, restarts=1, seed=7000 + i, options=opts)
            assert simple.value <= quad.value * (1.0 + 1e-9), (
                f"pair {pq.p},{pq.q} instance {i}: simple {simple.value} exceeds "
                f"coefficient estimate {quad.value}"
            )


def test_06_sufficiency_ratios_stay_bracketed():
    """Across the same exponent grid, the shift suites keep the mixed-norm /
    weighted-testing-sum ratio and the square suites keep the norm /
    (local-testing + coefficient) ratio below the configured bound of 64, with
    the observed maxima reported; a run configured with an unreachable bound
    fails, showing that exceedances are not silently absorbed."""
    pairs = [
        ExponentPair(1.5, 1.5),
        ExponentPair(2.0, 2.0),
        ExponentPair(3.0, 2.0),
        ExponentPair(2.0, 3.0),
    ]
    for k, pq in enumerate(pairs):
        rep = verify_shift_theorem(pq, size=5, seed=20 + k)
        assert rep.passed(), f"shift suite at ({pq.p},{pq.q}) failed: {rep.checks}"
        suff = rep.check("sufficiency-bracket")
        assert suff["kind"] == "bound" and suff["passed"]
        assert suff["observed"] is not None and suff["observed"] < 64.0
        assert rep.summary["worst_sufficiency_by_kappa"], "per-complexity maxima missing"

        sq = verify_square_theorem(pq, size=5, seed=40 + k)
        assert sq.passed(), f"square suite at ({pq.p},{pq.q}) failed: {sq.checks}"
        bracket = sq.check("norm-bracket")
        assert bracket["kind"] == "bound" and bracket["passed"]
        assert bracket["observed"] is not None and bracket["observed"] < 64.0

    crippled = verify_shift_theorem(ExponentPair(2.0, 2.0), size=2, seed=0, bracket_bound=1e-9)
    assert not crippled.passed(), "an unreachable bracket bound must fail the run"
    assert not crippled.check("sufficiency-bracket")["passed"]


def test_07_one_weight_assignment_identity_at_p2():
    """For 20 random strictly positive step weights, the assignment-constant
    estimate at p = 2 lands in [0.99, 1 + 1e-6] times the square root of the
    weight characteristic."""
    rep = one_weight_stein_experiment(count=20, seed=7, top=1)
    assert rep.passed(), f"one-weight suite failed: {rep.checks}"
    assert rep.check("p2-identity-lower")["passed"]
    assert rep.check("p2-identity-upper")["passed"]
    p2_rows = [row for row in rep.rows if row[1] == 2.0]
    assert len(p2_rows) == 20
    for row in p2_rows:
        ratio = row[6]
        assert 0.99 <= ratio <= 1.0 + 1e-6, (
            f"weight {row[0]}: assignment/characteristic-root ratio {ratio} "
            "leaves [0.99, 1+1e-6]"
        )


def test_08_principal_cubes_half_sparse_with_containment():
    """The stopping-time family is 1/2-sparse by exact mass accounting on 100
    random (function, measure) instances, and every cube's average is at most
    twice the average over its containing family member."""
    for i in range(100):
        rng = np.random.default_rng((1008, i))
        lat = DyadicLattice(1, 1, 1 + i % 4) if i % 3 else DyadicLattice(2, 0, 2)
        sigma = random_measure(lat, rng)
        f = random_step_function(lat, rng)
        family = principal_cubes(f, sigma)
        ok, fractions = verify_sparse(family, sigma, gamma=0.5)
        assert ok, f"instance {i}: sparsity fractions {fractions}"

        abs_vals = np.abs(f.values)

        def avg(cube):
            idxs = lat.leaf_indices(cube)
            mass = float(sigma.mass[idxs].sum())
            if mass == 0.0:
                return 0.0
            return float(np.dot(abs_vals[idxs], sigma.mass[idxs])) / mass

        for cube in lat.cubes():
            container = family.container(cube)
            assert avg(cube) <= 2.0 * avg(container) * (1.0 + 1e-12) + 1e-15, (
                f"instance {i}: cube {cube} average exceeds twice its "
                f"container {container}"
            )


def test_09_multiplier_chain_reaches_r_bound():
    """For depth pairs (0,1), (1,1) and (1,2), each multiplier-family member
    maps its scaled Haar probe to the flat profile on its base cube (pointwise,
    1e-12), and the coefficient estimate scaled by 2^(-N m) replays below the
    r-bound estimate on 20 random measure pairs per depth pair."""
    depth_pairs = [(0, 1), (1, 1), (1, 2)]
    for m, n in depth_pairs:
        rep = verify_lower_bound_lemma(m, n, ExponentPair(2.0, 2.0), size=20, seed=90 + m + n)
        assert rep.passed(), f"depths ({m},{n}): {rep.checks}"
        probe = rep.check("probe-identity")
        assert probe["passed"] and probe["observed"] <= 1e-12, (
            f"depths ({m},{n}): probe identity deviation {probe['observed']}"
        )
        chain = rep.check("scaled-chain")
        assert chain["passed"], (
            f"depths ({m},{n}): scaled chain margin {chain['observed']}"
        )


def test_10_verify_reports_byte_identical_across_threads(tmp_path):
    """The report-writing command with a fixed seed produces byte-identical
    output on repeated runs and under DYADLAB_THREADS of 1 and 4."""
    outputs = []
    for name, threads in (("a.json", "1"), ("b.json", "1"), ("c.json", "4")):
        out = tmp_path / name
        env = dict(os.environ, DYADLAB_THREADS=threads)
        proc = subprocess.run(
            [
                sys.executable,
                "-m",
                "dyadlab",
                "verify",
                "square",
                "--seed",
                "3",
                "--suite-size",
                "3",
                "--out",
                str(out),
            ],
            env=env,
            capture_output=True,
            text=True,
            timeout=300,
        )
        assert proc.returncode == 0, f"verify run failed: {proc.stderr}"
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1], "repeated runs with the same seed differ"
    assert outputs[0] == outputs[2], "worker count changed the report bytes"
