"""Length curves and sufficient conditions for PT to shorten mean set length.

A :class:`LengthCurve` tabulates the mean set measure ``L(c)`` of the base
predictor at coverage level ``c``; every checker evaluates it by linear
interpolation. Verdicts are strict: equality is reported as ``"boundary"``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels as K
from .conformal import CalibratedPredictor, vcp_threshold
from .errors import DomainError, GridTooCoarse
from .pt import adjusted_alpha
from .scores import invert_batch

DEFAULT_GRID = np.round(np.r_[np.arange(50, 100) * 0.01, 0.995], 10)
DEFAULT_P_GRID = np.round(np.arange(905, 1000, 10) * 0.001, 10)  # 0.905 .. 0.995
_EDGE = 1e-12


# ---------------------------------------------------------------------------
# special functions


def std_normal_cdf(z):
    out = K.ndtr(np.asarray(z, dtype=np.float64))
    return float(out) if np.ndim(out) == 0 else out


def std_normal_pdf(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.exp(-0.5 * z * z) / K.SQRT2PI
    return float(out) if np.ndim(out) == 0 else out


def std_normal_inv_cdf(u):
    """Inverse of the standard normal CDF; ``u`` must lie strictly in (0, 1)."""
    u = np.asarray(u, dtype=np.float64)
    if np.any(~(u > 0.0) | ~(u < 1.0)):
        raise DomainError("inverse normal CDF is defined on the open interval (0, 1)")
    out = K.ndtri(u)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# length curves


@dataclass(frozen=True)
class LengthCurve:
    levels: np.ndarray
    lengths: np.ndarray
    provenance: str = "empirical"

    def __post_init__(self):
        c = np.asarray(self.levels, dtype=np.float64)
        L = np.asarray(self.lengths, dtype=np.float64)
        if c.ndim != 1 or c.shape != L.shape or c.size < 3:
            raise GridTooCoarse("a length curve needs >= 3 matching (level, length) points")
        if np.any(np.diff(c) <= 0) or c[0] <= 0 or c[-1] >= 1:
            raise ValueError("levels must be strictly ascending inside (0, 1)")
        if np.any(L < 0):
            raise ValueError("lengths must be non-negative")
        finite = L[np.isfinite(L)]
        if np.any(np.diff(finite) < -1e-9 * max(1.0, float(np.max(np.abs(finite), initial=0)))):
            raise ValueError("lengths must be non-decreasing in the coverage level")
        object.__setattr__(self, "levels", c)
        object.__setattr__(self, "lengths", L)

    @property
    def infinite(self) -> np.ndarray:
        """Grid points whose conformal quantile overflowed to +inf."""
        return ~np.isfinite(self.lengths)

    def __call__(self, c):
        c = np.asarray(c, dtype=np.float64)
        if np.any(c < self.levels[0] - _EDGE) or np.any(c > self.levels[-1] + _EDGE):
            raise GridTooCoarse(
                f"level(s) outside tabulated [{self.levels[0]:g}, {self.levels[-1]:g}]")
        c = np.clip(c, self.levels[0], self.levels[-1])
        j = np.clip(np.searchsorted(self.levels, c, side="right") - 1, 0, self.levels.size - 2)
        c0, c1 = self.levels[j], self.levels[j + 1]
        y0, y1 = self.lengths[j], self.lengths[j + 1]
        w = (c - c0) / (c1 - c0)
        with np.errstate(invalid="ignore"):
            out = np.where(w == 0, y0, np.where(w == 1, y1, y0 + w * (y1 - y0)))
        return float(out) if np.ndim(out) == 0 else out

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level", "length"])
        for c, L in zip(self.levels, self.lengths):
            w.writerow([repr(float(c)), repr(float(L))])


def build_length_curve(cp: CalibratedPredictor, grid=None, probe=None) -> LengthCurve:
    """Empirical ``L(c)``: mean measure of split-CP sets at miscoverage ``1 - c``.

    ``probe`` is a feature matrix (or dataset) to average over; by default a
    single all-zeros point. Absolute-residual lengths are exactly ``2t`` and
    ignore the probe.
    """
    grid = DEFAULT_GRID if grid is None else np.asarray(grid, dtype=np.float64)
    if np.any(grid <= 0) or np.any(grid >= 1):
        raise ValueError("grid levels must lie in (0, 1)")
    if cp.score_fn.kind == "abs_residual":
        # every set is [mu - t, mu + t]: the length is 2t whatever the probe
        lengths = np.array([2.0 * vcp_threshold(cp, 1.0 - c) for c in grid])
        return LengthCurve(grid, lengths, "empirical")
    if probe is None:
        probe = np.zeros((1, _feature_dim(cp.model)))
    X = getattr(probe, "X", probe)
    lengths = np.array([
        float(invert_batch(cp.score_fn, X, vcp_threshold(cp, 1.0 - c), cp.model)
              .measure().mean())
        for c in grid])
    return LengthCurve(grid, lengths, "empirical")


def _feature_dim(model) -> int:
    for attr in ("weights", "lo_weights"):
        w = getattr(model, attr, None)
        if w is not None:
            return w.shape[0]
    raise TypeError(f"cannot infer feature dimension of {type(model).__name__}")


def analytic_curve(fn, grid=None, provenance="analytic") -> LengthCurve:
    grid = DEFAULT_GRID if grid is None else np.asarray(grid, dtype=np.float64)
    return LengthCurve(grid, np.asarray(fn(grid), dtype=np.float64), provenance)


def mixture_length_curve(mu: float = 20.0, grid=None) -> LengthCurve:
    """Full-width curve for absolute residuals of the symmetric ``N(+-mu, 1)``
    mixture with ``mu >> 1``: ``L(c) = 2 (mu + Phi^-1(c))``."""
    return analytic_curve(lambda c: 2.0 * (mu + std_normal_inv_cdf(c)), grid,
                          f"analytic(mixture mu={mu:g})")


def gaussian_length_curve(sigma: float = 1.0, grid=None) -> LengthCurve:
    """Full-width curve for ``N(0, sigma^2)`` residuals: ``2 sigma Phi^-1((1+c)/2)``."""
    return analytic_curve(lambda c: 2.0 * sigma * std_normal_inv_cdf(0.5 * (1.0 + c)), grid,
                          f"analytic(gaussian sigma={sigma:g})")


# ---------------------------------------------------------------------------
# checkers


def _verdict(lhs: float, rhs: float) -> str:
    if math.isclose(lhs, rhs, rel_tol=1e-12, abs_tol=1e-12):
        return "boundary"
    return "holds" if lhs > rhs else "fails"


def check_general_condition(curve: LengthCurve, alpha: float,
                            p_grid: Sequence[float] = DEFAULT_P_GRID) -> Optional[float]:
    """Best keep probability ``p`` with ``p L((1-alpha)/p) < L(1-alpha)``, or None.

    Among minimizers the largest ``p`` (least randomness) wins.
    """
    target = curve(1.0 - alpha)
    best_p, best_val = None, math.inf
    for p in sorted((float(v) for v in p_grid), reverse=True):
        adjusted_alpha(alpha, p)
        val = p * curve((1.0 - alpha) / p)
        if val < best_val:
            best_p, best_val = p, val
    if best_p is None or not best_val < target or _verdict(best_val, target) == "boundary":
        return None
    return best_p


@dataclass(frozen=True)
class FirstOrderResult:
    verdict: str
    ratio: float  # L(1-alpha) / (1-alpha)
    slope: float  # central difference of L at 1-alpha

    @property
    def holds(self) -> bool:
        return self.verdict == "holds"


def check_first_order(curve: LengthCurve, alpha: float, h: float = 0.01) -> FirstOrderResult:
    """Compare ``L(1-alpha)/(1-alpha)`` against the slope of ``L`` at ``1-alpha``."""
    c = 1.0 - alpha
    ratio = curve(c) / c
    slope = (curve(c + h) - curve(c - h)) / (2.0 * h)
    return FirstOrderResult(_verdict(ratio, slope), float(ratio), float(slope))


def check_secant(curve: LengthCurve, alpha: float, u_grid: Optional[Sequence[float]] = None):
    """First ``u`` in ``(1-alpha, 1)`` whose secant from ``1-alpha`` is flatter
    than ``L(1-alpha)/(1-alpha)``; returns ``(u, p=(1-alpha)/u)`` or None."""
    c = 1.0 - alpha
    if u_grid is None:
        u_grid = curve.levels[(curve.levels > c + _EDGE)]
    ratio = curve(c) / c
    Lc = curve(c)
    for u in sorted(float(v) for v in u_grid):
        if not c < u < 1.0:
            raise ValueError(f"secant point {u} outside ({c:g}, 1)")
        slope = (curve(u) - Lc) / (u - c)
        if _verdict(ratio, slope) == "holds":
            return u, c / u
    return None


def check_local_concavity(curve: LengthCurve, alpha: float) -> bool:
    """Are the second divided differences of ``L`` on ``[min level, 1-alpha]``
    all non-positive (up to ``1e-9`` relative tolerance)?"""
    mask = curve.levels <= 1.0 - alpha + _EDGE
    c, L = curve.levels[mask], curve.lengths[mask]
    if c.size < 3:
        raise GridTooCoarse("need >= 3 grid points at or below the target coverage")
    if not np.all(np.isfinite(L)):
        return False
    d1 = np.diff(L) / np.diff(c)
    d2 = np.diff(d1) / (0.5 * (c[2:] - c[:-2]))
    h = float(np.min(np.diff(c)))
    tol = 1e-9 * max(1.0, float(np.max(np.abs(L)))) / (h * h)
    return bool(np.all(d2 <= tol))


def gaussian_failure_case(alpha: float, p: float):
    """Closed-form ``(vcp_length, pt_expected_length)`` for Gaussian scores."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if not 1.0 - alpha < p < 1.0:
        raise DomainError(f"p must lie in ({1.0 - alpha:g}, 1), got {p}")
    a_prime = 1.0 - (1.0 - alpha) / p
    vcp = 2.0 * std_normal_inv_cdf(1.0 - alpha / 2.0)
    pt = 2.0 * p * std_normal_inv_cdf(1.0 - a_prime / 2.0)
    return vcp, pt
