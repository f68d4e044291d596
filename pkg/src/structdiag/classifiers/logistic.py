"""L1-penalized multinomial logistic regression by proximal gradient.

Minimises ``mean NLL(W, b) + lam * sum|W|`` over standardized features,
with unpenalized intercepts, starting from zero. Each iteration takes a
proximal (soft-thresholding) step and halves the step size until the
sufficient-decrease condition holds, which makes the objective
non-increasing. Coefficients are mapped back to the original feature scale
before they are returned.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ..data import Dataset
from ..errors import InsufficientSampleError, NumericalFailureError, ShapeError
from .spec import ClassifierSpec

__all__ = ["ConvergenceWarning", "LogitModel", "logistic_loss", "train_l1_logistic", "predict_logit", "standardize"]

MAX_HALVINGS = 60


class ConvergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True, eq=False)
class LogitModel:
    weights: np.ndarray
    intercepts: np.ndarray
    lam: float
    converged: bool
    objective: float
    n_iter: int
    class_names: tuple
    feature_names: tuple
    objective_trace: np.ndarray = None

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]


def standardize(X):
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return (X - mean) / scale, mean, scale


def logistic_loss(W, b, Z, y):
    """Mean multinomial negative log-likelihood and its gradient.

    Returns ``(loss, grad_W, grad_b)`` with ``W`` of shape (C, p).
    """
    n = Z.shape[0]
    logits = Z @ W.T + b
    lse = logsumexp(logits, axis=1)
    loss = float(np.mean(lse - logits[np.arange(n), y]))
    P = np.exp(logits - lse[:, None])
    P[np.arange(n), y] -= 1.0
    P /= n
    return loss, P.T @ Z, P.sum(axis=0)


def _soft(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def train_l1_logistic(d: Dataset, spec: ClassifierSpec | None = None, seed: int = 0,
                      threads: int = 1) -> LogitModel:
    """Fit the model; ``seed`` and ``threads`` are accepted for interface parity."""
    spec = spec or ClassifierSpec(kind="l1-logistic")
    C = d.n_classes
    if d.n < C:
        raise InsufficientSampleError(f"need at least {C} rows for {C} classes, got {d.n}")
    Z, mean, scale = standardize(d.features)
    y = d.labels
    lam = float(spec.lam)
    W = np.zeros((C, d.p))
    b = np.zeros(C)

    f, gW, gb = logistic_loss(W, b, Z, y)
    F = f + lam * np.abs(W).sum()
    trace = [F]
    step = 1.0
    converged = False
    it = 0
    for it in range(1, spec.max_iters + 1):
        for _ in range(MAX_HALVINGS):
            W_new = _soft(W - step * gW, step * lam)
            b_new = b - step * gb
            f_new, gW_new, gb_new = logistic_loss(W_new, b_new, Z, y)
            if not np.isfinite(f_new):
                raise NumericalFailureError(f"non-finite objective at iteration {it}", iteration=it)
            dW, db = W_new - W, b_new - b
            model = f + np.sum(gW * dW) + np.sum(gb * db) + (np.sum(dW * dW) + np.sum(db * db)) / (2 * step)
            if f_new <= model + 1e-15 * max(1.0, abs(f)):
                break
            step *= 0.5
        F_new = f_new + lam * np.abs(W_new).sum()
        if F_new > F:
            # rounding-level uphill step: keep the current iterate
            converged = True
            break
        change = abs(F - F_new) / max(abs(F), np.finfo(float).tiny)
        W, b, f, gW, gb, F = W_new, b_new, f_new, gW_new, gb_new, F_new
        trace.append(F)
        step = min(step * 2.0, 1e6)
        if change < spec.tol:
            converged = True
            break

    if not converged:
        warnings.warn(f"L1 logistic regression did not converge in {spec.max_iters} iterations "
                      f"(lambda={lam:g})", ConvergenceWarning, stacklevel=2)
    W_orig = W / scale
    b_orig = b - W_orig @ mean
    if not (np.all(np.isfinite(W_orig)) and np.all(np.isfinite(b_orig))):
        raise NumericalFailureError(f"non-finite coefficients at iteration {it}", iteration=it)
    return LogitModel(weights=W_orig, intercepts=b_orig, lam=lam, converged=converged,
                      objective=float(F), n_iter=it, class_names=d.class_names,
                      feature_names=d.feature_names, objective_trace=np.array(trace))


def predict_logit(model: LogitModel, X):
    """Argmax of softmax scores (lowest class id on ties); returns ``(labels, probs)``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1 and X.size == 0:
        X = X.reshape(0, model.n_features)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ShapeError(f"model expects {model.n_features} features, got shape {X.shape}")
    logits = X @ model.weights.T + model.intercepts
    if X.shape[0] == 0:
        return np.empty(0, dtype=np.intp), np.empty((0, len(model.class_names)))
    probs = np.exp(logits - logsumexp(logits, axis=1)[:, None])
    return np.argmax(logits, axis=1).astype(np.intp), probs
