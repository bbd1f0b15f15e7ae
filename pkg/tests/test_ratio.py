import numpy as np
import pytest

from dyadlab.ratio import (
    AscentOptions,
    ConstantEstimate,
    RatioProblem,
    enumerate_sign_expectation,
    maximize_ratio,
    spectral_norm_22,
)


def _rayleigh_problem(matrix):
    """num/den = |Ax| / |x| whose max is the top singular value."""
    a = np.asarray(matrix, dtype=float)
    gram = a.T @ a

    return RatioProblem(
        dimension=a.shape[1],
        numerator=lambda x: float(np.linalg.norm(a @ x)),
        denominator=lambda x: float(np.linalg.norm(x)),
        nonnegative=False,
        quadratic=(lambda x: gram @ x, lambda x: x),
        description="rayleigh",
    )


def test_estimate_kind_validation():
    with pytest.raises(ValueError):
        ConstantEstimate(1.0, "guess")
    est = ConstantEstimate(1.0, "bracket", bracket=(0.9, 1.1))
    assert est.bracket == (0.9, 1.1)


def test_quadratic_requires_sign_free_domain():
    with pytest.raises(ValueError):
        RatioProblem(
            dimension=2,
            numerator=lambda x: 1.0,
            denominator=lambda x: 1.0,
            quadratic=(lambda x: x, lambda x: x),
        )


def test_rayleigh_matches_svd():
    rng = np.random.default_rng(0)
    for trial in range(5):
        a = rng.normal(size=(8, 6))
        est = maximize_ratio(_rayleigh_problem(a), restarts=4, seed=trial)
        exact = float(np.linalg.svd(a, compute_uv=False)[0])
        assert est.value == pytest.approx(exact, rel=1e-9)
        assert est.kind == "lower-bound"
        # the witness coefficients replay to the reported value
        x = np.asarray(est.witness["coefficients"])
        prob = _rayleigh_problem(a)
        assert prob.ratio(x) == pytest.approx(est.value, rel=1e-12)


def test_gradient_ascent_on_nonnegative_problem():
    # maximize (sum of sqrt entries)/sqrt(sum) over the nonnegative orthant:
    # optimum is the flat vector with value sqrt(dim)
    dim = 6

    problem = RatioProblem(
        dimension=dim,
        numerator=lambda x: float(np.sqrt(np.maximum(x, 0.0)).sum()),
        denominator=lambda x: float(np.sqrt(np.maximum(x, 0.0).sum())),
    )
    est = maximize_ratio(problem, restarts=8, seed=1)
    assert est.value == pytest.approx(np.sqrt(dim), rel=1e-6)


def test_structured_starts_always_evaluated():
    # an adversarial start list whose best entry should be kept even with
    # zero ascent budget
    dim = 4
    spike = np.array([9.0, 0.0, 0.0, 0.0])
    problem = RatioProblem(
        dimension=dim,
        numerator=lambda x: float(x[0]),
        denominator=lambda x: float(np.linalg.norm(x)),
        structured_starts=(("spike", spike), ("bad-size", np.ones(7))),
    )
    opts = AscentOptions(max_iterations=0, structured_ascents=0)
    est = maximize_ratio(problem, restarts=0, seed=0, options=opts)
    assert est.value == pytest.approx(1.0)
    assert est.witness["source"].startswith("eval:")


def test_exact_floor_never_undercut():
    floor_x = np.array([1.0, 0.0])
    problem = RatioProblem(
        dimension=2,
        numerator=lambda x: 0.0,
        denominator=lambda x: float(np.linalg.norm(x)) or 1.0,
        exact_floor=(7.25, floor_x),
    )
    est = maximize_ratio(problem, restarts=2, seed=0)
    assert est.value == 7.25
    assert est.witness["source"] == "exact-floor"


def test_labels_forwarded_to_witness():
    problem = RatioProblem(
        dimension=2,
        numerator=lambda x: float(x.sum()),
        denominator=lambda x: float(np.linalg.norm(x)) or 1.0,
        labels=("first", "second"),
    )
    est = maximize_ratio(problem, restarts=1, seed=0)
    assert est.witness["labels"] == ["first", "second"]


def test_tie_break_is_lexicographic():
    # every singleton start gives ratio exactly 1; the witness must be the
    # lexicographically smallest normalized candidate, deterministically
    problem = RatioProblem(
        dimension=3,
        numerator=lambda x: float(np.abs(x).max()),
        denominator=lambda x: float(np.abs(x).max()) if np.any(x) else 0.0,
    )
    opts = AscentOptions(max_iterations=0, structured_ascents=0)
    a = maximize_ratio(problem, restarts=0, seed=0, options=opts)
    b = maximize_ratio(problem, restarts=0, seed=99, options=opts)
    assert a.value == b.value == 1.0
    assert a.witness["coefficients"] == b.witness["coefficients"]


def test_restart_monotonicity():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(7, 7))
    problem = _rayleigh_problem(a)
    values = [maximize_ratio(problem, restarts=r, seed=5).value for r in (0, 1, 4)]
    assert values[0] <= values[1] <= values[2] + 1e-15


def test_zero_dimension_problem():
    problem = RatioProblem(
        dimension=0, numerator=lambda x: 0.0, denominator=lambda x: 0.0
    )
    est = maximize_ratio(problem, restarts=3, seed=0)
    assert est.value == 0.0 and est.witness is None


def test_spectral_norm_oracle():
    rng = np.random.default_rng(4)
    a = rng.normal(size=(9, 5))
    est = spectral_norm_22(a)
    assert est.kind == "exact"
    assert est.value == pytest.approx(float(np.linalg.norm(a, 2)), rel=1e-12)
    v = np.asarray(est.witness["coefficients"])
    assert np.linalg.norm(a @ v) == pytest.approx(est.value * np.linalg.norm(v), rel=1e-12)
    zero = spectral_norm_22(np.zeros((3, 3)))
    assert zero.value == 0.0 and zero.kind == "exact" and zero.witness is None
    with pytest.raises(ValueError):
        spectral_norm_22(np.zeros(3))


def test_enumerate_sign_expectation():
    # E|e1 + e2| over independent signs is 1 (values 2, 0, 0, 2 with prob 1/4)
    val = enumerate_sign_expectation(lambda s: abs(s.sum()), 2)
    assert val == pytest.approx(1.0)
    assert enumerate_sign_expectation(lambda s: 42.0, 0) == 42.0
    mc = enumerate_sign_expectation(lambda s: abs(s.sum()), 2, mode="mc", seed=0)
    assert mc == pytest.approx(1.0, rel=0.1)
    with pytest.raises(ValueError):
        enumerate_sign_expectation(lambda s: 0.0, 2, mode="mc")
    with pytest.raises(ValueError):
        enumerate_sign_expectation(lambda s: 0.0, 25, mode="exact")
