"""Non-conformity scores and the threshold-to-set inverse.

For every kind the pair satisfies ``y in invert(t) <=> score(y) <= t``, so a
larger threshold always yields a superset.

Scalar helpers (``score``/``invert``) take one feature vector; the batch
helpers (``score_batch``/``invert_batch``) take a 2-D feature matrix and
return arrays / set batches.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Interval, IntervalBatch, LabelSet, LabelSetBatch, Null
from .errors import ConfigError, ScaleUnderflow
from .models import FittedModel, LinearMean, LinearQuantile, Logistic, predict

KINDS = ("abs_residual", "cqr", "softmax", "normalized")


@dataclass(frozen=True)
class ScoreFn:
    """Score family; ``scale_model`` feeds the normalized score's scale."""

    kind: str = "abs_residual"
    scale_model: Optional[FittedModel] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown score kind {self.kind!r}; expected one of {KINDS}",
                              "score.kind")


ABS_RESIDUAL = ScoreFn("abs_residual")
CQR = ScoreFn("cqr")
SOFTMAX = ScoreFn("softmax")


def _expect(model, types, kind):
    if not isinstance(model, types):
        raise TypeError(f"score {kind!r} cannot use a {type(model).__name__} model")


def _scales(fn: ScoreFn, X, scales, rng):
    if scales is None:
        if fn.scale_model is None:
            raise ValueError("normalized score needs scales or a scale_model")
        scales = predict(fn.scale_model, X, rng)
    s = np.asarray(scales, dtype=np.float64)
    if np.any(~np.isfinite(s)) or np.any(s < 0):
        raise ScaleUnderflow("local scale must be finite and non-negative")
    return s


def center(fn: ScoreFn, X, model: FittedModel):
    """Point prediction used as the regression null set (a singleton)."""
    if isinstance(model, LinearQuantile):
        lo, hi = predict(model, X)
        return 0.5 * (np.asarray(lo) + np.asarray(hi)) if np.ndim(lo) else 0.5 * (lo + hi)
    _expect(model, LinearMean, fn.kind)
    return predict(model, X)


def score_batch(fn: ScoreFn, X, y, model: FittedModel, scales=None, rng=None) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if fn.kind == "abs_residual":
        _expect(model, LinearMean, fn.kind)
        return np.abs(np.asarray(y, dtype=np.float64) - predict(model, X))
    if fn.kind == "cqr":
        _expect(model, LinearQuantile, fn.kind)
        lo, hi = predict(model, X)
        y = np.asarray(y, dtype=np.float64)
        return np.maximum(lo - y, y - hi)
    if fn.kind == "softmax":
        _expect(model, Logistic, fn.kind)
        P = predict(model, X)
        y = np.asarray(y, dtype=np.int64)
        return 1.0 - P[np.arange(P.shape[0]), y]
    _expect(model, LinearMean, fn.kind)
    s = _scales(fn, X, scales, rng)
    r = np.abs(np.asarray(y, dtype=np.float64) - predict(model, X))
    # scale 0 is the 0+ sentinel: residual 0 scores 0, anything else +inf
    with np.errstate(divide="ignore", invalid="ignore"):
        out = r / s
    return np.where(s == 0, np.where(r == 0, 0.0, np.inf), out)


def score(fn: ScoreFn, x, y, model: FittedModel, scale=None, rng=None) -> float:
    """Score of a single ``(x, y)`` pair."""
    x = np.asarray(x, dtype=np.float64)
    scales = None if scale is None else np.array([scale], dtype=np.float64)
    return float(score_batch(fn, x[None, :], np.array([y]), model, scales, rng)[0])


def invert_batch(fn: ScoreFn, X, threshold: float, model: FittedModel, scales=None, rng=None):
    """Prediction sets ``{y : score(x, y) <= threshold}`` for each row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    t = float(threshold)
    n = X.shape[0]
    if fn.kind == "softmax":
        _expect(model, Logistic, fn.kind)
        P = predict(model, X)
        return LabelSetBatch(1.0 - P <= t)
    if t == math.inf:
        return IntervalBatch(np.full(n, -np.inf), np.full(n, np.inf))
    if fn.kind == "abs_residual":
        _expect(model, LinearMean, fn.kind)
        mu = predict(model, X)
        return IntervalBatch(mu - t, mu + t)
    if fn.kind == "cqr":
        _expect(model, LinearQuantile, fn.kind)
        lo, hi = predict(model, X)
        return IntervalBatch(lo - t, hi + t)
    _expect(model, LinearMean, fn.kind)
    s = _scales(fn, X, scales, rng)
    mu = predict(model, X)
    # ``lo > hi`` encodes the empty set; the singleton at scale 0 only for t >= 0
    lo = np.where(s == 0, np.where(t >= 0, mu, np.inf), mu - t * s)
    hi = np.where(s == 0, np.where(t >= 0, mu, -np.inf), mu + t * s)
    return IntervalBatch(lo, hi)


def invert(fn: ScoreFn, x, threshold: float, model: FittedModel, scale=None, rng=None):
    """Prediction set for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    scales = None if scale is None else np.array([scale], dtype=np.float64)
    batch = invert_batch(fn, x[None, :], threshold, model, scales, rng)
    out = batch[0]
    if isinstance(out, LabelSet) or isinstance(out, Null):
        return out
    return Interval(out.lo, out.hi)
