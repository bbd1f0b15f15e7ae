"""Maximization of 1-homogeneous ratios, the dense spectral oracle, and
exact sign-pattern expectations.

Every value this module reports is an actually evaluated ratio of a feasible
point (or a closed-form floor supplied by the caller), so estimates of kind
"lower-bound" are genuine lower bounds up to double rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

SPECTRAL_LEAF_LIMIT = 1 << 12
EXACT_PATTERN_LIMIT = 20
SIGN_SAMPLES = 1 << 14


@dataclass
class ConstantEstimate:
    """A constant with provenance: its value, how it was obtained, and a witness.

    ``kind`` is "exact" (closed form or dense algebra), "lower-bound"
    (best feasible point found), or "bracket" (two-sided enclosure).
    """

    value: float
    kind: str
    witness: dict | None = None
    diagnostics: dict = field(default_factory=dict)
    bracket: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in ("exact", "lower-bound", "bracket"):
            raise ValueError(f"unknown estimate kind {self.kind!r}")


@dataclass
class AscentOptions:
    max_iterations: int = 400
    patience: int = 50
    improvement_tol: float = 1e-10
    fd_step: float = 1e-6
    line_search_points: int = 11
    structured_ascents: int = 4
    single_start_limit: int = 4096


@dataclass
class RatioProblem:
    """A 1-homogeneous ratio of nonnegative functionals over R^dimension.

    ``nonnegative`` restricts the domain to the nonnegative orthant (the
    projection is a clamp).  ``gradient`` returns (numerator grad, denominator
    grad); when absent, finite differences are used.  ``quadratic`` supplies
    (apply_A, apply_B) with numerator(x)^2 = x.A x and denominator(x)^2 = x.B x,
    enabling exact subspace line search; it requires a sign-free domain.
    ``exact_floor`` is a closed-form feasible value with its witness; the
    engine never reports less than it.
    """

    dimension: int
    numerator: Callable[[np.ndarray], float]
    denominator: Callable[[np.ndarray], float]
    nonnegative: bool = True
    gradient: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None
    quadratic: tuple[Callable, Callable] | None = None
    structured_starts: tuple = ()
    exact_floor: tuple[float, np.ndarray] | None = None
    labels: tuple | None = None
    description: str = ""

    def __post_init__(self):
        if self.quadratic is not None and self.nonnegative:
            raise ValueError("quadratic subspace search assumes a sign-free domain")

    def ratio(self, x: np.ndarray) -> float:
        den = self.denominator(x)
        if not np.isfinite(den) or den <= 0.0:
            return float("-inf")
        num = self.numerator(x)
        if not np.isfinite(num):
            return float("-inf")
        return num / den


def _normalize(x: np.ndarray) -> np.ndarray:
    peak = np.max(np.abs(x))
    if peak > 0 and np.isfinite(peak):
        return x / peak
    return x


def _fd_gradient(problem: RatioProblem, x: np.ndarray, opts: AscentOptions) -> np.ndarray:
    """Finite-difference gradient of the ratio (relative step, orthant-aware)."""
    base = problem.ratio(x)
    h = opts.fd_step * max(float(np.max(np.abs(x))), 1.0)
    grad = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xp[i] += h
        up = problem.ratio(xp)
        xm = x.copy()
        xm[i] -= h
        if problem.nonnegative and xm[i] < 0.0:
            down, dh = base, h
        else:
            down, dh = problem.ratio(xm), 2 * h
        if np.isfinite(up) and np.isfinite(down):
            grad[i] = (up - down) / dh
    return grad


def _ratio_gradient(problem: RatioProblem, x: np.ndarray, opts: AscentOptions) -> np.ndarray | None:
    if problem.gradient is None:
        return _fd_gradient(problem, x, opts)
    num = problem.numerator(x)
    den = problem.denominator(x)
    if den <= 0 or not np.isfinite(den) or not np.isfinite(num):
        return None
    gn, gd = problem.gradient(x)
    return (gn * den - num * gd) / (den * den)


def _gradient_ascend(
    problem: RatioProblem, x0: np.ndarray, opts: AscentOptions
) -> tuple[float, np.ndarray, int]:
    x = _normalize(x0.astype(float).copy())
    if problem.nonnegative:
        x = np.maximum(x, 0.0)
    best_val = problem.ratio(x)
    if not np.isfinite(best_val):
        return float("-inf"), x, 0
    best_x = x.copy()
    step = 0.5
    history = [best_val]
    iteration = 0
    for iteration in range(1, opts.max_iterations + 1):
        grad = _ratio_gradient(problem, x, opts)
        if grad is None:
            break
        if problem.nonnegative:
            grad = grad.copy()
            grad[(x <= 0.0) & (grad < 0.0)] = 0.0
        gnorm = float(np.linalg.norm(grad))
        xnorm = float(np.linalg.norm(x))
        if gnorm == 0.0 or not np.isfinite(gnorm):
            break
        direction = grad * (xnorm / gnorm)
        found = None
        for k in range(opts.line_search_points):
            t = step * (2.0 ** (k - opts.line_search_points // 2))
            cand = x + t * direction
            if problem.nonnegative:
                cand = np.maximum(cand, 0.0)
            val = problem.ratio(cand)
            if np.isfinite(val) and (found is None or val > found[0]):
                found = (val, cand, t)
        if found is None:
            break
        val, cand, t = found
        if val > best_val:
            best_val = val
            best_x = _normalize(cand)
            x = best_x.copy()
            step = t
        else:
            step *= 0.25
        history.append(best_val)
        if len(history) > opts.patience:
            old = history[-opts.patience - 1]
            if best_val - old <= opts.improvement_tol * max(abs(best_val), 1e-300):
                break
    return best_val, best_x, iteration


def _quadratic_ascend(
    problem: RatioProblem, x0: np.ndarray, opts: AscentOptions
) -> tuple[float, np.ndarray, int]:
    """Subspace iteration for ratios of quadratic forms: span{x, residual, history}."""
    apply_a, apply_b = problem.quadratic
    x = x0.astype(float).copy()
    norm = np.linalg.norm(x)
    if norm == 0:
        return float("-inf"), x, 0
    x /= norm
    prev: np.ndarray | None = None
    best_val = problem.ratio(x)
    best_x = x.copy()
    history = [best_val]
    iteration = 0
    for iteration in range(1, opts.max_iterations + 1):
        ax = apply_a(x)
        bx = apply_b(x)
        den2 = float(np.dot(x, bx))
        if den2 <= 0 or not np.isfinite(den2):
            break
        rho = float(np.dot(x, ax)) / den2
        residual = ax - rho * bx
        basis = [x, residual]
        if prev is not None:
            basis.append(prev)
        stacked = np.stack(basis, axis=1)
        q, r = np.linalg.qr(stacked)
        keep = np.abs(np.diag(r)) > 1e-12 * max(np.abs(np.diag(r)).max(), 1e-300)
        q = q[:, keep]
        if q.shape[1] == 0:
            break
        a_cols = np.stack([apply_a(q[:, j]) for j in range(q.shape[1])], axis=1)
        b_cols = np.stack([apply_b(q[:, j]) for j in range(q.shape[1])], axis=1)
        a_small = q.T @ a_cols
        b_small = q.T @ b_cols
        a_small = 0.5 * (a_small + a_small.T)
        b_small = 0.5 * (b_small + b_small.T)
        ridge = 1e-14 * max(float(np.trace(b_small)), 1e-300)
        try:
            chol = np.linalg.cholesky(b_small + ridge * np.eye(b_small.shape[0]))
        except np.linalg.LinAlgError:
            break
        inv_l = np.linalg.inv(chol)
        pencil = inv_l @ a_small @ inv_l.T
        vals, vecs = np.linalg.eigh(0.5 * (pencil + pencil.T))
        coeffs = inv_l.T @ vecs[:, -1]
        candidate = q @ coeffs
        cnorm = np.linalg.norm(candidate)
        if cnorm == 0 or not np.isfinite(cnorm):
            break
        candidate /= cnorm
        val = problem.ratio(candidate)
        if np.isfinite(val) and val > best_val:
            best_val = val
            best_x = candidate.copy()
        prev = candidate - x * float(np.dot(candidate, x))
        pnorm = np.linalg.norm(prev)
        prev = prev / pnorm if pnorm > 1e-14 else None
        x = candidate
        history.append(best_val)
        if len(history) > opts.patience:
            old = history[-opts.patience - 1]
            if best_val - old <= opts.improvement_tol * max(abs(best_val), 1e-300):
                break
    return best_val, best_x, iteration


def _structured_candidates(problem: RatioProblem, opts: AscentOptions) -> list[tuple[str, np.ndarray]]:
    out: list[tuple[str, np.ndarray]] = []
    dim = problem.dimension
    if dim <= opts.single_start_limit:
        single_indices = range(dim)
    else:
        single_indices = np.linspace(0, dim - 1, opts.single_start_limit).astype(int)
    for i in single_indices:
        e = np.zeros(dim)
        e[i] = 1.0
        out.append((f"single:{i}", e))
    out.append(("ones", np.ones(dim)))
    for label, start in problem.structured_starts:
        arr = np.asarray(start, dtype=float)
        if arr.size == dim:
            out.append((str(label), arr))
    return out


def maximize_ratio(
    problem: RatioProblem,
    restarts: int = 32,
    seed: int = 0,
    options: AscentOptions | None = None,
) -> ConstantEstimate:
    """Projected-gradient ascent over random and structured starts.

    Deterministic for a fixed seed; per-restart generators are seeded by
    (seed, index), so the reported value is nondecreasing in the restart
    count.  Exact ties between maxima resolve to the lexicographically
    smallest normalized witness.
    """
    opts = options or AscentOptions()
    if problem.dimension <= 0:
        return ConstantEstimate(0.0, "lower-bound", witness=None, diagnostics={"empty": True})
    ascend = _quadratic_ascend if problem.quadratic is not None else _gradient_ascend

    candidates: list[tuple[float, np.ndarray, str, int]] = []
    structured = _structured_candidates(problem, opts)
    scored = []
    for label, start in structured:
        val = problem.ratio(start)
        if np.isfinite(val):
            scored.append((val, label, start))
            candidates.append((val, _normalize(start), f"eval:{label}", 0))
    scored.sort(key=lambda t: -t[0])
    for val, label, start in scored[: opts.structured_ascents]:
        bval, bx, iters = ascend(problem, start, opts)
        if np.isfinite(bval):
            candidates.append((bval, _normalize(bx), f"ascent:{label}", iters))
    for r in range(restarts):
        rng = np.random.default_rng((seed, r))
        start = rng.standard_normal(problem.dimension)
        if problem.nonnegative:
            start = np.abs(start)
        bval, bx, iters = ascend(problem, start, opts)
        if np.isfinite(bval):
            candidates.append((bval, _normalize(bx), f"ascent:random:{r}", iters))
    if problem.exact_floor is not None:
        fval, fx = problem.exact_floor
        candidates.append((fval, _normalize(np.asarray(fx, dtype=float)), "exact-floor", 0))

    if not candidates:
        return ConstantEstimate(
            0.0, "lower-bound", witness=None, diagnostics={"note": "no feasible start"}
        )
    best_val = max(c[0] for c in candidates)
    tied = [c for c in candidates if c[0] == best_val]
    tied.sort(key=lambda c: tuple(c[1]))
    _, best_x, source, iters = tied[0]
    witness = {
        "coefficients": [float(v) for v in best_x],
        "source": source,
    }
    if problem.labels is not None:
        witness["labels"] = [str(l) for l in problem.labels]
    diagnostics = {
        "restarts": restarts,
        "seed": seed,
        "structured_starts": len(structured),
        "iterations": iters,
        "problem": problem.description,
        "mode": "subspace" if problem.quadratic is not None else "gradient",
    }
    return ConstantEstimate(float(best_val), "lower-bound", witness=witness, diagnostics=diagnostics)


# ---------------------------------------------------------------------------
# dense spectral oracle
# ---------------------------------------------------------------------------


def spectral_norm_22(matrix: np.ndarray) -> ConstantEstimate:
    """Largest singular value of an assembled dense matrix (LAPACK-backed).

    This is the exact L^2-to-L^2 norm once both sides have been rescaled into
    plain Euclidean coordinates by square-root mass factors.
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2:
        raise ValueError("spectral oracle needs a 2-d matrix")
    if matrix.shape[1] > SPECTRAL_LEAF_LIMIT or matrix.size > 1 << 26:
        raise ValueError("spectral oracle size limit exceeded")
    if matrix.size == 0 or not matrix.any():
        return ConstantEstimate(0.0, "exact", witness=None, diagnostics={"method": "dense-svd"})
    u, s, vt = np.linalg.svd(matrix)
    witness = {"coefficients": [float(v) for v in vt[0]], "source": "right-singular-vector"}
    return ConstantEstimate(
        float(s[0]),
        "exact",
        witness=witness,
        diagnostics={"method": "dense-svd", "shape": list(matrix.shape)},
    )


# ---------------------------------------------------------------------------
# sign-pattern expectations
# ---------------------------------------------------------------------------


def enumerate_sign_expectation(
    functional: Callable[[np.ndarray], float],
    count: int,
    mode: str = "auto",
    seed: int | None = None,
) -> float:
    """Average of ``functional(signs)`` over independent uniform sign vectors.

    Exact enumeration up to 2**20 patterns; seeded Monte Carlo (2**14 draws)
    beyond that or on request.
    """
    if count < 0:
        raise ValueError("count must be nonnegative")
    if count == 0:
        return float(functional(np.ones(0)))
    if mode not in ("auto", "exact", "mc"):
        raise ValueError("mode must be one of auto/exact/mc")
    if mode == "exact" and count > EXACT_PATTERN_LIMIT:
        raise ValueError(f"exact enumeration capped at 2**{EXACT_PATTERN_LIMIT} patterns")
    exact = mode == "exact" or (mode == "auto" and count <= EXACT_PATTERN_LIMIT)
    if exact:
        total = 0.0
        for pattern in range(1 << count):
            bits = (pattern >> np.arange(count)) & 1
            total += float(functional(bits * 2.0 - 1.0))
        return total / (1 << count)
    if seed is None:
        raise ValueError("Monte Carlo sign expectation requires a seed")
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(SIGN_SAMPLES):
        signs = rng.integers(0, 2, size=count) * 2.0 - 1.0
        total += float(functional(signs))
    return total / SIGN_SAMPLES
