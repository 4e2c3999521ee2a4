"""Split conformal prediction over a frozen model and calibration scores."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .core import Dataset
from .errors import DataError, EmptyScores
from .models import FittedModel
from .scores import ScoreFn, center, invert, invert_batch, score_batch


@dataclass(frozen=True)
class Level:
    alpha: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"miscoverage rate must lie in (0, 1), got {self.alpha}")

    @property
    def coverage(self) -> float:
        return 1.0 - self.alpha


def as_level(level) -> Level:
    return level if isinstance(level, Level) else Level(float(level))


def quantile_rank(n: int, tau: float) -> int:
    """1-based rank, in decreasing order, of the empirical ``tau`` quantile.

    ``ceil((n + 1)(1 - tau))``; products within 1e-9 of an integer are
    snapped to it so decimal inputs like ``alpha=0.1`` behave as written.
    """
    raw = (n + 1) * (1.0 - tau)
    near = round(raw)
    if abs(raw - near) <= 1e-9 * max(1.0, abs(raw)):
        raw = near
    return math.ceil(raw)


def empirical_quantile(scores, tau: float) -> float:
    """Empirical ``tau`` quantile as the ``ceil((n+1)(1-tau))``-th largest score.

    A rank below 1 (``tau`` too close to or above 1 for this ``n``) gives
    ``+inf``; a rank above ``n`` gives the minimum. ``scores`` must be sorted
    ascending.
    """
    n = len(scores)
    if n == 0:
        raise EmptyScores("no calibration scores")
    if not tau > 0.0:
        raise ValueError(f"quantile level must be positive, got {tau}")
    k = quantile_rank(n, tau)
    if k <= 0:
        return math.inf
    if k > n:
        return float(scores[0])
    return float(scores[n - k])


@dataclass(frozen=True, eq=False)
class CalibratedPredictor:
    model: FittedModel
    score_fn: ScoreFn
    calib_scores: np.ndarray
    allow_infinite: bool = field(default=False, repr=False)

    def __post_init__(self):
        s = np.sort(np.asarray(self.calib_scores, dtype=np.float64))
        if s.size == 0:
            raise EmptyScores("no calibration scores")
        bad = np.isnan(s) if self.allow_infinite else ~np.isfinite(s)
        if np.any(bad):
            raise DataError("calibration scores must be finite")
        s.setflags(write=False)
        object.__setattr__(self, "calib_scores", s)

    @property
    def n(self) -> int:
        return self.calib_scores.shape[0]


def calibrate(model: FittedModel, score_fn: ScoreFn, calib: Dataset, scales=None,
              rng=None) -> CalibratedPredictor:
    if calib is None or len(calib) == 0:
        raise EmptyScores("empty calibration set")
    s = score_batch(score_fn, calib.X, calib.y, model, scales, rng)
    return CalibratedPredictor(model, score_fn, s)


def vcp_threshold(cp: CalibratedPredictor, level) -> float:
    """Score threshold at the finite-sample corrected level ``(1-alpha)(1+1/n)``."""
    alpha = as_level(level).alpha
    return empirical_quantile(cp.calib_scores, (1.0 - alpha) * (1.0 + 1.0 / cp.n))


def vcp_predict(cp: CalibratedPredictor, x, level, scale=None, rng=None):
    return invert(cp.score_fn, x, vcp_threshold(cp, level), cp.model, scale, rng)


def vcp_predict_batch(cp: CalibratedPredictor, X, level, scales=None, rng=None):
    return invert_batch(cp.score_fn, X, vcp_threshold(cp, level), cp.model, scales, rng)


class VCPMethod:
    """Deterministic split-conformal predictor as an evaluation handle."""

    randomized = False

    def __init__(self, cp: CalibratedPredictor, name: str = "vcp"):
        self.cp = cp
        self.name = name
        self.p = 1.0
        self._threshold = lru_cache(maxsize=None)(lambda a: vcp_threshold(cp, a))

    def threshold(self, level) -> float:
        return self._threshold(as_level(level).alpha)

    def predict(self, X, level, rng=None):
        return invert_batch(self.cp.score_fn, X, self.threshold(level), self.cp.model)

    def center(self, X):
        return center(self.cp.score_fn, X, self.cp.model)
