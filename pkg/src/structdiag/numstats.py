"""Covariance estimation, SPD solves and the distance of separation.

The distance of separation of a feature set is the squared Mahalanobis
distance between the two class means, ``delta' Sigma^{-1} delta``. For the
mixture ``N(+mu, Sigma)`` / ``N(-mu, Sigma)`` the mean difference is
``delta = 2 mu``, so ``d = 4 mu' Sigma^{-1} mu``, and with equal priors the
Bayes error is ``Phi(-sqrt(d) / 2)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .data import Dataset, FeatureSet, select_features
from .errors import (
    InsufficientSampleError,
    InvalidArgumentError,
    ShapeError,
    SingularMatrixError,
)

__all__ = [
    "CovarianceMatrix",
    "SolveResult",
    "SeparationResult",
    "PerturbationDecomposition",
    "MarginalBenefitReport",
    "normal_cdf",
    "estimate_covariance",
    "pooled_covariance",
    "to_correlation",
    "spd_solve",
    "separation_from_moments",
    "separation_from_data",
    "bayes_error_from_separation",
    "cross_block_frobenius",
    "marginal_benefit",
    "perturbation_decomposition",
]

RIDGE_STEPS = 7  # delta_k = 10**(-8 + k) * trace / p, k = 0..6


def normal_cdf(x):
    """Standard normal CDF, accurate to double precision in both tails."""
    if np.ndim(x) == 0:
        return 0.5 * math.erfc(-float(x) / math.sqrt(2.0))
    from scipy.special import ndtr
    return ndtr(np.asarray(x, dtype=np.float64))


def _condition_number(values: np.ndarray) -> float:
    eig = np.linalg.eigvalsh(values)
    top = float(np.max(np.abs(eig))) if eig.size else 0.0
    low = float(np.min(eig)) if eig.size else 0.0
    if top == 0.0 or low <= 0.0:
        return math.inf
    return top / low


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    values: np.ndarray
    kind: str = "covariance"
    ridge_applied: float = 0.0
    condition_estimate: float = field(default=None)
    degenerate: tuple[int, ...] = ()

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ShapeError(f"covariance must be square, got shape {v.shape}")
        if self.kind not in ("covariance", "correlation"):
            raise InvalidArgumentError(f"unknown covariance kind {self.kind!r}")
        scale = max(1.0, float(np.max(np.abs(v)))) if v.size else 1.0
        if not np.allclose(v, v.T, rtol=0.0, atol=1e-12 * scale):
            raise InvalidArgumentError("covariance matrix is not symmetric")
        v = 0.5 * (v + v.T)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.condition_estimate is None:
            object.__setattr__(self, "condition_estimate", _condition_number(v))

    @property
    def p(self) -> int:
        return self.values.shape[0]

    def block(self, rows, cols) -> np.ndarray:
        return self.values[np.ix_(list(rows), list(cols))]

    def sub(self, columns) -> "CovarianceMatrix":
        cols = list(columns)
        return CovarianceMatrix(self.values[np.ix_(cols, cols)], self.kind)


@dataclass(frozen=True, eq=False)
class SolveResult:
    x: np.ndarray
    ridge: float
    rcond: float


@dataclass(frozen=True, eq=False)
class SeparationResult:
    d: float
    bayes_error: float
    mu_hat: np.ndarray
    feature_set: FeatureSet | None
    pair: tuple[int, int] | None
    condition_estimate: float
    ridge_applied: float = 0.0

    @property
    def ridge_engaged(self) -> bool:
        return self.ridge_applied > 0.0


@dataclass(frozen=True)
class PerturbationDecomposition:
    exact: float
    s1: float
    s2: float
    cross_norm: float
    residual: float


@dataclass(frozen=True)
class MarginalBenefitReport:
    d_f1: SeparationResult
    d_f2: SeparationResult
    d_union: SeparationResult
    cross_norm: float
    hypotheses_pass: bool
    threshold_used: float
    min_separation_used: float


def estimate_covariance(X) -> CovarianceMatrix:
    """Unbiased sample covariance (denominator n - 1)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"expected an n x p matrix, got shape {X.shape}")
    n = X.shape[0]
    if n < 2:
        raise InsufficientSampleError(f"covariance needs n >= 2 rows, got {n}")
    Xc = X - X.mean(axis=0)
    S = Xc.T @ Xc / (n - 1)
    return CovarianceMatrix(0.5 * (S + S.T))


def pooled_covariance(XA, XB) -> CovarianceMatrix:
    """Within-class covariance pooled over two classes with common Sigma."""
    nA, nB = len(XA), len(XB)
    if nA < 2 or nB < 2:
        raise InsufficientSampleError(
            f"pooled covariance needs >= 2 rows per class, got {nA} and {nB}")
    SA = estimate_covariance(XA).values
    SB = estimate_covariance(XB).values
    return CovarianceMatrix(((nA - 1) * SA + (nB - 1) * SB) / (nA + nB - 2))


def to_correlation(S: CovarianceMatrix) -> CovarianceMatrix:
    """Scale a covariance to unit diagonal.

    Zero-variance features get a zero row/column with a unit diagonal entry
    and are listed in ``degenerate``.
    """
    if S.kind != "covariance":
        raise InvalidArgumentError("to_correlation expects a covariance matrix")
    var = np.diag(S.values).copy()
    degenerate = tuple(int(i) for i in np.flatnonzero(var <= 0.0))
    sd = np.sqrt(np.where(var > 0.0, var, 1.0))
    R = S.values / np.outer(sd, sd)
    if degenerate:
        R[list(degenerate), :] = 0.0
        R[:, list(degenerate)] = 0.0
    np.fill_diagonal(R, 1.0)
    R = np.clip(R, -1.0, 1.0)
    return CovarianceMatrix(R, kind="correlation", degenerate=degenerate)


def _cholesky(A: np.ndarray):
    """Cholesky factor, or None when A is not numerically positive definite.

    A factorization whose smallest pivot is below ``p * eps`` relative to the
    largest diagonal entry counts as a failure: LAPACK will happily factor a
    rank-deficient PSD matrix with round-off sized pivots.
    """
    try:
        c, lower = linalg.cho_factor(A, lower=True, check_finite=False)
    except linalg.LinAlgError:
        return None
    piv = np.diag(c) ** 2
    top = float(np.max(np.diag(A)))
    if not np.all(np.isfinite(piv)) or top <= 0.0:
        return None
    if float(piv.min()) <= A.shape[0] * np.finfo(float).eps * top:
        return None
    return c, lower


def spd_solve(S: CovarianceMatrix, b) -> SolveResult:
    """Solve ``S x = b`` by Cholesky, escalating a diagonal ridge on failure.

    The ridge schedule is ``10**(-8 + k) * trace(S) / p`` for k = 0..6; the
    ridge actually used is returned. ``rcond`` is the squared ratio of the
    smallest to largest pivot of the factor, a cheap reciprocal-condition
    estimate.
    """
    A = np.asarray(S.values, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    p = A.shape[0]
    if b.shape != (p,):
        raise ShapeError(f"right-hand side has shape {b.shape}, expected ({p},)")
    ridge = 0.0
    fac = _cholesky(A)
    if fac is None:
        scale = float(np.trace(A)) / p
        if scale > 0.0 and np.isfinite(scale):
            for k in range(RIDGE_STEPS):
                ridge = 10.0 ** (-8 + k) * scale
                fac = _cholesky(A + ridge * np.eye(p))
                if fac is not None:
                    break
        if fac is None:
            raise SingularMatrixError("matrix is not positive definite even after maximum ridge")
    x = linalg.cho_solve(fac, b, check_finite=False)
    piv = np.abs(np.diag(fac[0]))
    rcond = float((piv.min() / piv.max()) ** 2)
    return SolveResult(x=x, ridge=ridge, rcond=rcond)


def bayes_error_from_separation(d: float) -> float:
    if not d >= 0.0:
        raise InvalidArgumentError(f"distance of separation must be >= 0, got {d}")
    return normal_cdf(-0.5 * math.sqrt(d))


def separation_from_moments(delta, S: CovarianceMatrix, *, feature_set: FeatureSet | None = None,
                            pair: tuple[int, int] | None = None) -> SeparationResult:
    """Separation ``delta' S^{-1} delta`` for a class-mean difference ``delta``.

    ``mu_hat`` in the result is the half difference ``delta / 2``, i.e. the
    centre offset of a symmetric mixture.
    """
    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape != (S.p,):
        raise ShapeError(f"mean vector has shape {delta.shape}, covariance is {S.p} x {S.p}")
    sol = spd_solve(S, delta)
    d = max(0.0, float(delta @ sol.x))
    return SeparationResult(d=d, bayes_error=bayes_error_from_separation(d), mu_hat=0.5 * delta,
                            feature_set=feature_set, pair=pair,
                            condition_estimate=S.condition_estimate, ridge_applied=sol.ridge)


def _pair_blocks(d: Dataset, pair, f: FeatureSet):
    a, b = pair
    if a == b:
        raise InvalidArgumentError("a class pair needs two different classes")
    for c in pair:
        if not 0 <= c < d.n_classes:
            raise InvalidArgumentError(f"class id {c} outside 0..{d.n_classes - 1}")
    sub = select_features(d, f)
    XA = sub.features[sub.labels == a]
    XB = sub.features[sub.labels == b]
    if len(XA) < 2 or len(XB) < 2:
        raise InsufficientSampleError(
            f"classes {d.class_names[a]!r}/{d.class_names[b]!r} need >= 2 instances each, "
            f"got {len(XA)} and {len(XB)}")
    return XA, XB


def separation_from_data(d: Dataset, pair: tuple[int, int], f: FeatureSet) -> SeparationResult:
    """Empirical distance of separation between two classes on feature set ``f``.

    Uses the difference of the two class means and their pooled within-class
    covariance.
    """
    XA, XB = _pair_blocks(d, pair, f)
    if len(f) >= len(XA) + len(XB):
        warnings.warn(f"feature set {f.name!r} has {len(f)} features for "
                      f"{len(XA) + len(XB)} instances; covariance estimate is unreliable",
                      RuntimeWarning, stacklevel=2)
    delta = XA.mean(axis=0) - XB.mean(axis=0)
    S = pooled_covariance(XA, XB)
    return separation_from_moments(delta, S, feature_set=f, pair=tuple(pair))


def cross_block_frobenius(R: CovarianceMatrix, f1: FeatureSet, f2: FeatureSet) -> float:
    if R.kind != "correlation":
        raise InvalidArgumentError("cross-block norm is defined on a correlation matrix")
    if set(f1.columns) & set(f2.columns):
        raise InvalidArgumentError(f"feature sets {f1.name!r} and {f2.name!r} overlap")
    f1.validate(R.p)
    f2.validate(R.p)
    return float(np.linalg.norm(R.block(f1.columns, f2.columns), "fro"))


def marginal_benefit(d: Dataset, pair: tuple[int, int], f1: FeatureSet, f2: FeatureSet,
                     threshold: float = 0.1, min_separation: float = 0.1) -> MarginalBenefitReport:
    """Check whether adding ``f2`` to ``f1`` should increase separation.

    ``hypotheses_pass`` requires the cross-correlation block between the two
    sets to have Frobenius norm at most ``threshold`` and both sets to carry
    separation above ``min_separation``. Both constants are engineering
    defaults, not derived quantities.
    """
    if set(f1.columns) & set(f2.columns):
        raise InvalidArgumentError(f"feature sets {f1.name!r} and {f2.name!r} overlap")
    union = f1.union(f2)
    r1 = separation_from_data(d, pair, f1)
    r2 = separation_from_data(d, pair, f2)
    ru = separation_from_data(d, pair, union)
    XA, XB = _pair_blocks(d, pair, union)
    R = to_correlation(pooled_covariance(XA, XB))
    k = len(f1)
    cross = cross_block_frobenius(R, FeatureSet(f1.name, tuple(range(k))),
                                  FeatureSet(f2.name, tuple(range(k, len(union)))))
    ok = cross <= threshold and min(r1.d, r2.d) > min_separation
    return MarginalBenefitReport(r1, r2, ru, cross, bool(ok), threshold, min_separation)


def _block_quadratic(u, A, name) -> float:
    fac = _cholesky(A)
    if fac is None:
        raise SingularMatrixError(f"block {name} is singular", block=name)
    return float(u @ linalg.cho_solve(fac, u, check_finite=False))


def perturbation_decomposition(u, S: CovarianceMatrix, split_at: int) -> PerturbationDecomposition:
    """Compare ``u' S^{-1} u`` with its block-diagonal approximation.

    ``s1`` is the block-diagonal term ``u1' A11^{-1} u1 + u2' A22^{-1} u2``
    and ``s2`` the first-order correction ``-u' A^{-1} E A^{-1} u``, where E
    holds only the off-diagonal blocks. ``residual = exact - s1``.
    """
    u = np.asarray(u, dtype=np.float64)
    p = S.p
    if u.shape != (p,):
        raise ShapeError(f"vector has shape {u.shape}, matrix is {p} x {p}")
    if not 0 < split_at < p:
        raise InvalidArgumentError(f"split_at must lie in 1..{p - 1}, got {split_at}")
    V = S.values
    A11, A22, A12 = V[:split_at, :split_at], V[split_at:, split_at:], V[:split_at, split_at:]
    u1, u2 = u[:split_at], u[split_at:]
    fac = _cholesky(V)
    if fac is None:
        raise SingularMatrixError("full matrix is singular", block="full")
    exact = float(u @ linalg.cho_solve(fac, u, check_finite=False))
    q1 = _block_quadratic(u1, A11, "A11")
    q2 = _block_quadratic(u2, A22, "A22")
    w1 = linalg.solve(A11, u1, assume_a="pos")
    w2 = linalg.solve(A22, u2, assume_a="pos")
    s2 = -2.0 * float(w1 @ A12 @ w2)
    return PerturbationDecomposition(exact=exact, s1=q1 + q2, s2=s2,
                                     cross_norm=float(np.linalg.norm(A12, "fro")),
                                     residual=exact - (q1 + q2))
