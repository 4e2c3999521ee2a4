"""Coverage, length, group coverage and interval stability.

A *method* is any object with ``name``, ``p`` and
``predict(X, level, rng) -> IntervalBatch | LabelSetBatch``; see
:class:`cpaudit.conformal.VCPMethod` and :class:`cpaudit.pt.PTMethod`.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels as K
from .conformal import CalibratedPredictor, as_level, vcp_predict_batch
from .core import Dataset, as_stream
from .errors import DataError, GridTooCoarse, InfiniteMeasure
from .pt import adjusted_alpha

CSV_COLUMNS = ("method", "alpha", "p", "coverage", "coverage_se", "mean_length", "length_se",
               "min_group_coverage", "interval_stability", "stability_se", "n_test",
               "trials", "seed")

NAN = float("nan")


@dataclass
class AuditReport:
    method: str
    alpha: float
    p: float
    coverage: float
    coverage_se: float
    mean_length: float
    length_se: float
    n_test: int
    group_coverage: dict = field(default_factory=dict)
    min_group_coverage: float = NAN
    interval_stability: float = NAN
    stability_se: float = NAN
    trials: int = 1
    seed: int = 0
    kept_fraction: float = NAN
    kept_coverage: float = NAN
    meaningful_length: float = NAN

    @property
    def half_length(self) -> float:
        return self.mean_length / 2.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["half_length"] = self.half_length
        return d

    def csv_row(self) -> list:
        d = asdict(self)
        return [_fmt(d[c]) for c in CSV_COLUMNS]


def _se(x: np.ndarray) -> float:
    if x.size < 2:
        return NAN
    if not np.all(np.isfinite(x)):
        return math.inf
    return float(np.std(x, ddof=1) / math.sqrt(x.size))


def evaluate(method, test: Dataset, level, rng=None) -> AuditReport:
    """Single-run coverage/length audit of ``method`` on ``test``.

    Null sets count with measure 0; any infinite set makes the mean length
    infinite rather than being dropped.
    """
    if test is None or len(test) == 0:
        raise DataError("empty test set")
    lvl = as_level(level)
    sets = method.predict(test.X, lvl, as_stream(rng))
    hit = sets.contains(test.y)
    meas = sets.measure()
    hitf = hit.astype(np.float64)
    rep = AuditReport(
        method=method.name, alpha=lvl.alpha, p=float(getattr(method, "p", 1.0)),
        coverage=float(hitf.mean()), coverage_se=_se(hitf),
        mean_length=float(meas.mean()), length_se=_se(meas), n_test=len(test))
    if test.groups is not None:
        gc = {}
        for g in sorted(set(test.groups.tolist())):
            m = test.groups == g
            gc[g] = float(hitf[m].mean())
        rep.group_coverage = gc
        rep.min_group_coverage = min(gc.values())
    else:
        rep.min_group_coverage = rep.coverage
    kept = getattr(sets, "kept", None)
    if kept is None:
        kept = np.ones(len(test), dtype=bool)
    rep.kept_fraction = float(kept.mean())
    rep.kept_coverage = float(hitf[kept].mean()) if kept.any() else NAN
    rep.meaningful_length = float(meas[kept].mean()) if kept.any() else NAN
    return rep


def stability_samples(method, X, level, repeats: int = 100, rng=None) -> np.ndarray:
    """Set measures for each row of ``X`` over ``repeats`` independent runs.

    Row ``i`` runs on the child stream ``rng.child(i)``, so serial and
    parallel evaluation see identical draws.
    """
    if repeats < 2:
        raise ValueError("interval stability needs repeats >= 2")
    rng = as_stream(rng)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    lvl = as_level(level)
    out = np.empty((X.shape[0], repeats))
    for i in range(X.shape[0]):
        tiled = np.repeat(X[i:i + 1], repeats, axis=0)
        out[i] = method.predict(tiled, lvl, rng.child(i)).measure()
    if not np.all(np.isfinite(out)):
        raise InfiniteMeasure("an infinite-measure set makes the variance undefined")
    return out


def interval_stability(method, test: Dataset, level, repeats: int = 100, rng=None,
                       return_se: bool = False):
    """Mean over test points of the (unbiased) variance of the set measure."""
    samples = stability_samples(method, test.X, level, repeats, rng)
    per_point = K.row_variance(samples)
    value = float(per_point.mean())
    if return_se:
        return value, _se(per_point)
    return value


def stability_closed_form(p: float, meaningful_length: float) -> float:
    """Interval stability of PT over a constant-length base: ``p(1-p)L^2``."""
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    if meaningful_length < 0:
        raise ValueError("length must be non-negative")
    return p * (1.0 - p) * meaningful_length ** 2


# ---------------------------------------------------------------------------
# group-coverage sufficient condition


def _as_curve(f_A, alpha_needed: Sequence[float]) -> Callable[[float], float]:
    if callable(f_A):
        return f_A
    levels, values = (np.asarray(a, dtype=np.float64) for a in f_A)
    lo, hi = levels[0], levels[-1]
    for a in alpha_needed:
        if not lo - 1e-12 <= a <= hi + 1e-12:
            raise GridTooCoarse(f"miscoverage {a:.6g} outside tabulated [{lo:g}, {hi:g}]")
    return lambda a: float(np.interp(a, levels, values))


def conditional_coverage_condition(f_A, alpha: float, p: float) -> str:
    """Does PT not worsen miscoverage inside a subgroup?

    ``f_A`` is the subgroup miscoverage curve of the base, either a callable
    or a ``(levels, values)`` tabulation (linearly interpolated). With
    ``F(q) = q * f_A(1 - (1 - alpha) / q)`` the verdict is ``"improves"`` when
    ``F(1) - F(p) >= 1 - p`` and ``"no-guarantee"`` otherwise.
    """
    a_prime = adjusted_alpha(alpha, p)
    f = _as_curve(f_A, (alpha, a_prime))
    gain = f(alpha) - p * f(a_prime)
    return "improves" if gain >= (1.0 - p) - 1e-12 else "no-guarantee"


def miscoverage_curve(cp: CalibratedPredictor, data: Dataset, alphas=None):
    """Empirical miscoverage of split CP on ``data`` over a grid of levels."""
    if alphas is None:
        alphas = np.round(np.arange(1, 51) * 0.01, 10)
    alphas = np.asarray(alphas, dtype=np.float64)
    miss = np.array([1.0 - vcp_predict_batch(cp, data.X, a).contains(data.y).mean()
                     for a in alphas])
    return alphas, miss


# ---------------------------------------------------------------------------
# aggregation and serialization


def aggregate(reports: Sequence[AuditReport], seed: int = 0) -> AuditReport:
    """Mean across trials; standard errors are sample std / sqrt(trials)."""
    if not reports:
        raise ValueError("nothing to aggregate")

    def col(name):
        return np.array([getattr(r, name) for r in reports], dtype=np.float64)

    first = reports[0]
    cov, length = col("coverage"), col("mean_length")
    stab = col("interval_stability")
    groups = sorted({g for r in reports for g in r.group_coverage})
    out = AuditReport(
        method=first.method, alpha=first.alpha, p=first.p,
        coverage=float(cov.mean()), coverage_se=_se(cov),
        mean_length=float(length.mean()), length_se=_se(length),
        n_test=first.n_test, trials=len(reports), seed=seed,
        group_coverage={g: float(np.mean([r.group_coverage[g] for r in reports
                                           if g in r.group_coverage])) for g in groups},
        min_group_coverage=float(col("min_group_coverage").mean()),
        interval_stability=float(stab.mean()) if np.all(np.isfinite(stab)) else NAN,
        stability_se=_se(stab) if np.all(np.isfinite(stab)) else NAN,
        kept_fraction=float(col("kept_fraction").mean()),
        kept_coverage=float(col("kept_coverage").mean()),
        meaningful_length=float(col("meaningful_length").mean()))
    return out


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    return v


def write_reports_csv(reports: Sequence[AuditReport], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerow(r.csv_row())


def dumps_json(payload) -> str:
    """Deterministic JSON; non-finite floats become the strings 'inf'/'nan'."""
    return json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n"
