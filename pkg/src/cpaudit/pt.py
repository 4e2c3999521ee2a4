"""The prejudicial trick: a randomized wrapper around any conformal predictor.

With probability ``1 - p`` a test point receives a null set (a singleton at
the point prediction for regression, the empty label set for
classification); otherwise it receives the base set at the adjusted
miscoverage ``1 - (1 - alpha) / p``. Marginal coverage is preserved because
``p * (1 - alpha') = 1 - alpha``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .conformal import CalibratedPredictor, as_level, vcp_predict, vcp_threshold
from .core import (Interval, IntervalBatch, LabelSet, LabelSetBatch, RngStream, as_stream)
from .errors import ConfigError, InvalidKeepProbability
from .models import Logistic, TwoPointScale, predict
from .scores import ScoreFn, center, invert, invert_batch

MODES = ("null", "two_level")


def adjusted_alpha(alpha: float, p: float) -> float:
    """Miscoverage the base must run at so that ``p * (1 - alpha') = 1 - alpha``."""
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}", "alpha")
    if not (1.0 - alpha < p <= 1.0):
        raise InvalidKeepProbability(
            f"keep probability {p} outside ({1.0 - alpha:g}, 1] for alpha={alpha}", "pt.p")
    if p == 1.0:
        return alpha
    return 1.0 - (1.0 - alpha) / p


def second_level(alpha: float, p: float, alpha1: float) -> float:
    """Solve ``(1 - p) * alpha1 + p * alpha2 = alpha`` for ``alpha2``."""
    return (alpha - (1.0 - p) * alpha1) / p


@dataclass(frozen=True)
class PTConfig:
    """Keep probability, target miscoverage and null/two-level mode.

    In ``two_level`` mode the ``1 - p`` branch returns the base set at
    miscoverage ``alpha1`` (close to 1 approximates the null set) and the
    ``p`` branch uses the solved ``alpha2``.
    """

    p: float
    target_alpha: float
    mode: str = "null"
    alpha1: Optional[float] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}", "pt.mode")
        adjusted_alpha(self.target_alpha, self.p)  # validates the pair
        if self.mode == "two_level":
            if self.alpha1 is None or not 0.0 < self.alpha1 < 1.0:
                raise ConfigError(f"alpha1 must lie in (0, 1), got {self.alpha1}", "pt.alpha1")
            a2 = self.alpha2
            if not 0.0 < a2 < 1.0:
                raise ConfigError(
                    f"alpha1={self.alpha1} forces alpha2={a2:.6g} outside (0, 1)", "pt.alpha1")

    @property
    def alpha_prime(self) -> float:
        return adjusted_alpha(self.target_alpha, self.p)

    @property
    def alpha2(self) -> float:
        if self.mode == "null":
            return self.alpha_prime
        return second_level(self.target_alpha, self.p, self.alpha1)


@dataclass(frozen=True)
class PTPredictor:
    base: CalibratedPredictor
    config: PTConfig

    @property
    def classification(self) -> bool:
        return isinstance(self.base.model, Logistic)


def _pt_from_coin(pt: PTPredictor, x, u: float):
    cfg = pt.config
    if u <= cfg.p:
        return vcp_predict(pt.base, x, cfg.alpha2)
    if cfg.mode == "two_level":
        return vcp_predict(pt.base, x, cfg.alpha1)
    if pt.classification:
        return LabelSet(frozenset())
    mu = float(center(pt.base.score_fn, np.asarray(x, dtype=np.float64), pt.base.model))
    return Interval(mu, mu)


def pt_predict(pt: PTPredictor, x, rng: RngStream):
    """One randomized prediction; consumes one uniform from ``rng``."""
    return _pt_from_coin(pt, x, as_stream(rng).uniform())


def pt_coins(rng: RngStream, n: int) -> np.ndarray:
    """Per-point coins for a batch: child ``i`` of a freshly spawned stream."""
    return as_stream(rng).spawn().child_uniforms(n)


def pt_predict_batch(pt: PTPredictor, X, rng: RngStream, coins=None):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = X.shape[0]
    cfg = pt.config
    u = pt_coins(rng, n) if coins is None else np.asarray(coins)
    kept = u <= cfg.p
    base = pt.base
    main = invert_batch(base.score_fn, X, vcp_threshold(base, cfg.alpha2), base.model)
    if cfg.mode == "two_level":
        alt = invert_batch(base.score_fn, X, vcp_threshold(base, cfg.alpha1), base.model)
    elif pt.classification:
        alt = LabelSetBatch(np.zeros_like(main.mask))
    else:
        mu = center(base.score_fn, X, base.model)
        alt = IntervalBatch(mu, mu)
    if isinstance(main, LabelSetBatch):
        return LabelSetBatch(np.where(kept[:, None], main.mask, alt.mask), kept=kept)
    return IntervalBatch(np.where(kept, main.lo, alt.lo), np.where(kept, main.hi, alt.hi),
                         kept=kept)


class PTMethod:
    """PT over a calibrated base, parameterized by the evaluation level."""

    randomized = True

    def __init__(self, cp: CalibratedPredictor, p: float, mode: str = "null",
                 alpha1: Optional[float] = None, name: str = "pt"):
        self.cp = cp
        self.p = float(p)
        self.mode = mode
        self.alpha1 = alpha1
        self.name = name

    def predictor(self, level) -> PTPredictor:
        cfg = PTConfig(self.p, as_level(level).alpha, self.mode, self.alpha1)
        return PTPredictor(self.cp, cfg)

    def predict(self, X, level, rng=None):
        return pt_predict_batch(self.predictor(level), X, as_stream(rng))

    def center(self, X):
        return center(self.cp.score_fn, X, self.cp.model)


# ---------------------------------------------------------------------------
# localized CP with a two-point scale estimator


@dataclass(frozen=True)
class LocalizedCP:
    """Normalized-score CP whose scale estimator outputs 1 or the 0+ sentinel.

    Calibration points that draw the sentinel get an infinite normalized
    score, which pushes the calibration quantile to the ``(1-alpha)/p``
    level of the finite scores: the same adjustment PT makes explicitly.
    """

    base: CalibratedPredictor
    scale: TwoPointScale
    cp: CalibratedPredictor

    def threshold(self, level) -> float:
        return vcp_threshold(self.cp, level)


def localize(base: CalibratedPredictor, p: float, rng: RngStream) -> LocalizedCP:
    """Freeze one draw of calibration-side scales over ``base``'s residuals."""
    if base.score_fn.kind != "abs_residual":
        raise ValueError("localized equivalence is defined over absolute-residual scores")
    scale = TwoPointScale(p)
    s = predict(scale, np.empty((base.n, 1)), as_stream(rng))
    r = base.calib_scores
    with np.errstate(divide="ignore", invalid="ignore"):
        norm = np.where(s == 0, np.where(r == 0, 0.0, np.inf), r / s)
    cp = CalibratedPredictor(base.model, ScoreFn("normalized", scale), norm,
                             allow_infinite=True)
    return LocalizedCP(base, scale, cp)


def localized_pt_equivalence(base: CalibratedPredictor, p: float, x, rng: RngStream,
                             alpha: float = 0.1, localized: Optional[LocalizedCP] = None):
    """Run localized CP and PT on ``x`` with one shared coin.

    Returns ``(localized_set, pt_set)``. Pass ``localized`` to reuse a frozen
    calibration draw across calls; otherwise one is drawn from ``rng``.
    """
    rng = as_stream(rng)
    loc = localized if localized is not None else localize(base, p, rng.spawn())
    u = rng.uniform()
    sigma = 1.0 if u <= p else 0.0
    loc_set = invert(loc.cp.score_fn, x, loc.threshold(alpha), base.model, scale=sigma)
    pt_set = _pt_from_coin(PTPredictor(base, PTConfig(p, alpha)), x, u)
    return loc_set, pt_set


def localized_pt_pairs(base: CalibratedPredictor, p: float, X, rng: RngStream,
                       alpha: float = 0.1, localized: Optional[LocalizedCP] = None):
    """Batch form of :func:`localized_pt_equivalence` (one coin per row)."""
    rng = as_stream(rng)
    loc = localized if localized is not None else localize(base, p, rng.spawn())
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    u = pt_coins(rng, X.shape[0])
    sigma = np.where(u <= p, 1.0, 0.0)
    loc_sets = invert_batch(loc.cp.score_fn, X, loc.threshold(alpha), base.model, scales=sigma)
    pt_sets = pt_predict_batch(PTPredictor(base, PTConfig(p, alpha)), X, rng, coins=u)
    return loc_sets, pt_sets
