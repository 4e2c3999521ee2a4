"""Desk-scale predictors: OLS, pinball-loss quantile lines, softmax regression.

``inject_bias`` manufactures misspecification by shifting the outputs of a
fitted model; ``TwoPointScale`` is a deliberately degenerate local-scale
estimator that outputs 1 or the ``0+`` sentinel (encoded as exactly 0).
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import _kernels as K
from .core import CLASSIFICATION, REGRESSION, Dataset, as_stream
from .errors import DataError, Diverged, DimensionMismatch, SingularDesign

RIDGE = 1e-8


@dataclass(frozen=True)
class LinearMean:
    weights: np.ndarray
    intercept: float
    bias: float = 0.0
    task = REGRESSION


@dataclass(frozen=True)
class LinearQuantile:
    lo_weights: np.ndarray
    lo_intercept: float
    hi_weights: np.ndarray
    hi_intercept: float
    levels: tuple
    bias: float = 0.0
    losses: Optional[tuple] = None  # (lo_curve, hi_curve), best-so-far per step
    task = REGRESSION

    def __post_init__(self):
        lo, hi = self.levels
        if not 0.0 < lo < hi < 1.0:
            raise ValueError(f"quantile levels must satisfy 0 < lo < hi < 1, got {self.levels}")


@dataclass(frozen=True)
class Logistic:
    weights: np.ndarray  # (d, n_classes)
    intercepts: np.ndarray
    bias: float = 0.0
    biased: tuple = (0, 0)  # half-open class-index range receiving ``bias``
    task = CLASSIFICATION

    @property
    def n_classes(self) -> int:
        return self.intercepts.shape[0]


@dataclass(frozen=True)
class TwoPointScale:
    p_keep: float
    task = REGRESSION

    def __post_init__(self):
        if not 0.0 < self.p_keep < 1.0:
            raise ValueError(f"p_keep must lie in (0, 1), got {self.p_keep}")


FittedModel = LinearMean | LinearQuantile | Logistic | TwoPointScale


# ---------------------------------------------------------------------------
# fitting


def _require_regression(train: Dataset):
    if train.task != REGRESSION:
        raise DataError("regression model requires a dataset with a real target")


def fit_linear_mean(train: Dataset) -> LinearMean:
    """Ordinary least squares via the (centred) normal equations.

    Falls back to a ``1e-8`` ridge when the Gram matrix is rank deficient.
    """
    _require_regression(train)
    X, y = train.X, train.y
    n, d = X.shape
    if n <= d + 1:
        raise DataError(f"need more than {d + 1} samples to fit {d} weights, got {n}")
    xm, ym = X.mean(axis=0), y.mean()
    Xc = X - xm
    gram = Xc.T @ Xc
    rhs = Xc.T @ (y - ym)
    if np.linalg.matrix_rank(gram) < d:
        gram = gram + RIDGE * np.eye(d)
    try:
        w = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularDesign(str(exc)) from exc
    if not np.all(np.isfinite(w)):
        raise SingularDesign("non-finite least-squares solution")
    return LinearMean(w, float(ym - xm @ w))


def _standardize(X):
    m = X.mean(axis=0)
    s = X.std(axis=0)
    s = np.where(s > 0, s, 1.0)
    return (X - m) / s, m, s


def pinball_loss(w, b, X, y, tau) -> float:
    u = y - (X @ w + b)
    return float(np.mean(u * (tau - (u < 0))))


def pinball_subgradient(w, b, X, y, tau):
    """(d loss/d w, d loss/d b); at kinks the ``u = 0`` side is taken as ``u >= 0``."""
    u = y - (X @ w + b)
    g = (u < 0).astype(np.float64) - tau
    return X.T @ g / len(y), float(np.mean(g))


def fit_linear_quantile(train: Dataset, tau_lo: float = 0.05, tau_hi: float = 0.95,
                        steps: int = 2000, lr: float = 0.05) -> LinearQuantile:
    """Two linear quantile lines by full-batch pinball-loss subgradient descent.

    Features and target are standardized internally; the step size decays as
    ``lr / sqrt(1 + t / (steps / 10))`` and the best iterate is returned.
    """
    _require_regression(train)
    if not 0.0 < tau_lo < tau_hi < 1.0:
        raise ValueError(f"need 0 < tau_lo < tau_hi < 1, got ({tau_lo}, {tau_hi})")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    Xs, xm, xs = _standardize(train.X)
    ym = train.y.mean()
    ys = train.y.std()
    ys = ys if ys > 0 else 1.0
    yz = (train.y - ym) / ys

    fits = []
    for tau in (tau_lo, tau_hi):
        w, b, losses = K.pinball_descent(Xs, yz, tau, steps, lr)
        if not np.all(np.isfinite(losses)):
            raise Diverged(f"pinball descent at tau={tau} produced a non-finite loss")
        w = np.asarray(w)
        weights = ys * w / xs
        intercept = ym + ys * (b - float(np.sum(w * xm / xs)))
        fits.append((weights, float(intercept), np.asarray(losses) * ys))
    (wl, bl, ll), (wh, bh, lh) = fits
    return LinearQuantile(wl, bl, wh, bh, (tau_lo, tau_hi), losses=(ll, lh))


def _softmax(Z):
    Z = Z - Z.max(axis=-1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=-1, keepdims=True)


def fit_logistic(train: Dataset, n_classes: Optional[int] = None, steps: int = 500,
                 lr: float = 0.5, l2: float = 1e-4) -> Logistic:
    """Multinomial logistic regression by full-batch gradient descent."""
    if train.task != CLASSIFICATION:
        raise DataError("logistic model requires integer labels")
    k = int(n_classes or train.y.max() + 1)
    if k < 2:
        raise DataError("need at least two classes")
    Xs, xm, xs = _standardize(train.X)
    n, d = Xs.shape
    Y = np.zeros((n, k))
    Y[np.arange(n), train.y] = 1.0
    W = np.zeros((d, k))
    c = np.zeros(k)
    for _ in range(steps):
        P = _softmax(Xs @ W + c)
        G = (P - Y) / n
        W -= lr * (Xs.T @ G + l2 * W)
        c -= lr * G.sum(axis=0)
    weights = W / xs[:, None]
    intercepts = c - (xm / xs) @ W
    return Logistic(weights, intercepts)


def inject_bias(model: FittedModel, b: float, classes: Optional[tuple] = None) -> FittedModel:
    """Shift model outputs by ``b``.

    Regression kinds shift every point/quantile prediction. For ``Logistic``
    the logits of classes ``range(*classes)`` are shifted before the softmax;
    the default range is the first half of the classes.
    """
    if isinstance(model, (LinearMean, LinearQuantile)):
        return replace(model, bias=model.bias + float(b))
    if isinstance(model, Logistic):
        if classes is None:
            classes = (0, max(1, model.n_classes // 2))
        return replace(model, bias=model.bias + float(b), biased=tuple(classes))
    raise TypeError(f"cannot inject bias into {type(model).__name__}")


# ---------------------------------------------------------------------------
# prediction


def _check_dim(X, d):
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != d:
        raise DimensionMismatch(f"expected {d} features, got {X.shape[-1]}")
    return X


def predict(model: FittedModel, X, rng=None):
    """Predict for one point (1-D ``X``) or a batch (2-D ``X``).

    Returns the point prediction, a ``(lo, hi)`` quantile pair, class
    probabilities, or (``TwoPointScale``) a scale draw in ``{0, 1}``.
    """
    if isinstance(model, TwoPointScale):
        if rng is None:
            raise ValueError("TwoPointScale predictions need an RngStream")
        rng = as_stream(rng)
        X = np.asarray(X)
        if X.ndim <= 1:
            return 1.0 if rng.uniform() <= model.p_keep else 0.0
        u = rng.spawn().child_uniforms(X.shape[0])
        return np.where(u <= model.p_keep, 1.0, 0.0)
    if isinstance(model, LinearMean):
        X = _check_dim(X, model.weights.shape[0])
        out = (X @ model.weights + model.intercept) + model.bias
        return float(out) if np.ndim(out) == 0 else out
    if isinstance(model, LinearQuantile):
        X = _check_dim(X, model.lo_weights.shape[0])
        lo = (X @ model.lo_weights + model.lo_intercept) + model.bias
        hi = (X @ model.hi_weights + model.hi_intercept) + model.bias
        if np.ndim(lo) == 0:
            return float(lo), float(hi)
        return lo, hi
    if isinstance(model, Logistic):
        X = _check_dim(X, model.weights.shape[0])
        Z = X @ model.weights + model.intercepts
        if model.bias:
            a, b = model.biased
            Z = np.array(Z, copy=True)
            Z[..., a:b] += model.bias
        return _softmax(Z)
    raise TypeError(f"unknown model {type(model).__name__}")


def checkpoints(losses) -> np.ndarray:
    """Loss values at every 10% of the descent (11 points incl. the start)."""
    losses = np.asarray(losses)
    steps = len(losses) - 1
    idx = np.unique(np.round(np.linspace(0, steps, 11)).astype(int))
    return losses[idx]
