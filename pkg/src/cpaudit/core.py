"""Shared types: seeded streams, datasets, prediction sets, CSV I/O."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple, Optional, Sequence

import numpy as np

from . import _kernels as K
from .errors import DataError, DimensionMismatch, EmptyPartition

MASK64 = (1 << 64) - 1

REGRESSION = "regression"
CLASSIFICATION = "classification"
ROLES = ("train", "calibration", "test")


def mix(seed: int, index: int) -> int:
    """Seed of child stream ``index`` under ``seed``."""
    return int(K.child_seeds(int(seed) & MASK64, np.array([index], dtype=np.uint64))[0])


@dataclass
class RngStream:
    """Counter-based uniform stream.

    Draw ``k`` is a pure function of ``(seed, k)``; the counter only records
    how many draws have been consumed. A stream is single-owner: hand out
    ``child(i)`` streams rather than sharing one across workers.
    """

    seed: int
    counter: int = 0

    def __post_init__(self):
        self.seed = int(self.seed) & MASK64

    def bits(self, n: int) -> np.ndarray:
        ctr = np.arange(self.counter, self.counter + n, dtype=np.uint64)
        self.counter += n
        return K.counter_bits(np.uint64(self.seed), ctr)

    def uniform(self) -> float:
        return float(K.bits_to_unit(self.bits(1))[0])

    def uniforms(self, n: int) -> np.ndarray:
        return K.bits_to_unit(self.bits(n))

    def normals(self, n: int) -> np.ndarray:
        """Standard normals by inverse-CDF transform, one draw each."""
        return K.ndtri(K.bits_to_open_unit(self.bits(n)))

    def child(self, index: int) -> "RngStream":
        return RngStream(mix(self.seed, index))

    def spawn(self) -> "RngStream":
        """Fresh stream keyed by the next draw; advances this stream by one."""
        return RngStream(int(self.bits(1)[0]))

    def child_uniforms(self, n: int) -> np.ndarray:
        """First draw of children ``0..n-1`` (does not advance this stream)."""
        seeds = K.child_seeds(np.uint64(self.seed), np.arange(n, dtype=np.uint64))
        return K.bits_to_unit(K.counter_bits(seeds, np.zeros(n, dtype=np.uint64)))


def as_stream(rng) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    if rng is None:
        return RngStream(0)
    return RngStream(int(rng))


# ---------------------------------------------------------------------------
# datasets


class Sample(NamedTuple):
    features: np.ndarray
    target: Optional[float] = None
    label: Optional[int] = None
    group: Optional[str] = None


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    task: str = REGRESSION
    groups: Optional[np.ndarray] = None
    role: str = "train"

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
            raise DataError("dataset must be non-empty with feature dimension >= 1")
        if self.task == REGRESSION:
            y = np.asarray(self.y, dtype=np.float64)
        elif self.task == CLASSIFICATION:
            y = np.asarray(self.y)
            if y.size and (not np.issubdtype(y.dtype, np.integer) and
                           not np.all(np.mod(y, 1) == 0)):
                raise DataError("classification labels must be integers")
            y = y.astype(np.int64)
            if y.size and y.min() < 0:
                raise DataError("classification labels must be non-negative")
        else:
            raise DataError(f"unknown task {self.task!r}")
        if y.shape != (X.shape[0],):
            raise DimensionMismatch(f"{X.shape[0]} feature rows but {y.shape} responses")
        groups = self.groups
        if groups is not None:
            groups = np.asarray(groups).astype(str)
            if groups.shape != y.shape:
                raise DimensionMismatch("group column length differs from sample count")
        if self.role not in ROLES:
            raise DataError(f"role must be one of {ROLES}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "groups", groups)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def __getitem__(self, i: int) -> Sample:
        g = None if self.groups is None else str(self.groups[i])
        if self.task == REGRESSION:
            return Sample(self.X[i], target=float(self.y[i]), group=g)
        return Sample(self.X[i], label=int(self.y[i]), group=g)

    def __iter__(self) -> Iterator[Sample]:
        return (self[i] for i in range(len(self)))

    def take(self, idx, role: Optional[str] = None) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.X[idx], self.y[idx], self.task,
                       None if self.groups is None else self.groups[idx],
                       role or self.role)

    @classmethod
    def from_samples(cls, samples: Sequence[Sample], role: str = "train") -> "Dataset":
        if not samples:
            raise DataError("dataset must be non-empty")
        has_target = [s.target is not None for s in samples]
        has_label = [s.label is not None for s in samples]
        if any(t == l for t, l in zip(has_target, has_label)):
            raise DataError("each sample needs exactly one of target/label")
        if len(set(has_target)) != 1:
            raise DataError("mixed regression and classification samples")
        has_group = {s.group is not None for s in samples}
        if len(has_group) != 1:
            raise DataError("group tags must be present on all samples or none")
        dims = {np.atleast_1d(s.features).shape for s in samples}
        if len(dims) != 1:
            raise DimensionMismatch(f"inconsistent feature dimensions {sorted(dims)}")
        X = np.stack([np.atleast_1d(np.asarray(s.features, dtype=np.float64)) for s in samples])
        if has_target[0]:
            y, task = np.array([s.target for s in samples], dtype=np.float64), REGRESSION
        else:
            y, task = np.array([s.label for s in samples], dtype=np.int64), CLASSIFICATION
        groups = np.array([s.group for s in samples]) if has_group == {True} else None
        return cls(X, y, task, groups, role)


def concat(a: Dataset, b: Dataset, role: Optional[str] = None) -> Dataset:
    if a.task != b.task or a.dim != b.dim or (a.groups is None) != (b.groups is None):
        raise DataError("cannot concatenate incompatible datasets")
    groups = None if a.groups is None else np.concatenate([a.groups, b.groups])
    return Dataset(np.vstack([a.X, b.X]), np.concatenate([a.y, b.y]), a.task, groups,
                   role or a.role)


def fold_sizes(n: int, fractions: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment of ``n`` items over ``fractions``."""
    raw = [n * f for f in fractions]
    sizes = [math.floor(r) for r in raw]
    short = n - sum(sizes)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - sizes[i]), i))
    for i in order[:short]:
        sizes[i] += 1
    return sizes


def split_dataset(data: Dataset, fractions=(0.5, 0.25, 0.25), rng=None):
    """Random train/calibration/test partition.

    Returns three datasets whose rows are a permutation-based partition of
    ``data``; the same stream state always yields the same split.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise DataError("fractions must be three positive numbers")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError(f"fractions sum to {sum(fractions)!r}, expected 1")
    n = len(data)
    sizes = fold_sizes(n, fractions)
    if n < 3 or min(sizes) == 0:
        raise EmptyPartition(f"{n} samples cannot fill folds {fractions} (sizes {sizes})")
    perm = np.argsort(as_stream(rng).uniforms(n), kind="stable")
    cuts = np.cumsum(sizes)[:-1]
    parts = np.split(perm, cuts)
    return tuple(data.take(np.sort(p), role) for p, role in zip(parts, ROLES))


# ---------------------------------------------------------------------------
# prediction sets


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"interval bounds out of order: [{self.lo}, {self.hi}]")

    @property
    def measure(self) -> float:
        return self.hi - self.lo

    def __contains__(self, y) -> bool:
        return self.lo <= y <= self.hi


@dataclass(frozen=True)
class LabelSet:
    labels: frozenset = field(default_factory=frozenset)

    @property
    def measure(self) -> float:
        return float(len(self.labels))

    def __contains__(self, y) -> bool:
        return int(y) in self.labels


@dataclass(frozen=True)
class Null:
    @property
    def measure(self) -> float:
        return 0.0

    def __contains__(self, y) -> bool:
        return False


PredictionSet = Interval | LabelSet | Null


@dataclass(frozen=True)
class IntervalBatch:
    """Intervals for a batch of points; ``lo > hi`` encodes the empty set.

    ``kept`` is set by randomized wrappers to flag the meaningful branch.
    """

    lo: np.ndarray
    hi: np.ndarray
    kept: Optional[np.ndarray] = None

    def __len__(self):
        return self.lo.shape[0]

    def measure(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            m = self.hi - self.lo
        return np.where(self.lo > self.hi, 0.0, m)

    def contains(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        return (self.lo <= y) & (y <= self.hi)

    def __getitem__(self, i) -> PredictionSet:
        lo, hi = float(self.lo[i]), float(self.hi[i])
        return Null() if lo > hi else Interval(lo, hi)


@dataclass(frozen=True)
class LabelSetBatch:
    """Label sets as a boolean ``(n, n_classes)`` membership matrix."""

    mask: np.ndarray
    kept: Optional[np.ndarray] = None

    def __len__(self):
        return self.mask.shape[0]

    def measure(self) -> np.ndarray:
        return self.mask.sum(axis=1).astype(np.float64)

    def contains(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.int64)
        ok = (y >= 0) & (y < self.mask.shape[1])
        out = np.zeros(len(self), dtype=bool)
        rows = np.nonzero(ok)[0]
        out[rows] = self.mask[rows, y[rows]]
        return out

    def __getitem__(self, i) -> LabelSet:
        return LabelSet(frozenset(int(k) for k in np.nonzero(self.mask[i])[0]))


# ---------------------------------------------------------------------------
# CSV


def read_csv(path, role: str = "train") -> Dataset:
    """Load ``f0..f{d-1}`` plus ``target`` or ``label`` (and optional ``group``)."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc
    if len(rows) < 2:
        raise DataError(f"{path}: no data rows")
    header = [h.strip() for h in rows[0]]
    feats = [h for h in header if h.startswith("f") and h[1:].isdigit()]
    if not feats or feats != [f"f{i}" for i in range(len(feats))]:
        raise DataError(f"{path}: feature columns must be f0..f{{d-1}}")
    if ("target" in header) == ("label" in header):
        raise DataError(f"{path}: need exactly one of 'target' or 'label' columns")
    resp = "target" if "target" in header else "label"
    fi = [header.index(f) for f in feats]
    ri = header.index(resp)
    gi = header.index("group") if "group" in header else None
    try:
        body = [r for r in rows[1:] if r]
        X = np.array([[float(r[i]) for i in fi] for r in body])
        if resp == "target":
            y = np.array([float(r[ri]) for r in body])
        else:
            y = np.array([int(r[ri]) for r in body])
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: malformed row ({exc})") from exc
    groups = np.array([r[gi] for r in body]) if gi is not None else None
    task = REGRESSION if resp == "target" else CLASSIFICATION
    return Dataset(X, y, task, groups, role)


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_csv(data: Dataset, fh) -> None:
    """Write ``data`` in the dataset CSV format to an open text handle."""
    w = csv.writer(fh, lineterminator="\n")
    resp = "target" if data.task == REGRESSION else "label"
    header = [f"f{i}" for i in range(data.dim)] + [resp]
    if data.groups is not None:
        header.append("group")
    w.writerow(header)
    for i in range(len(data)):
        row = [_fmt(v) for v in data.X[i]]
        row.append(_fmt(float(data.y[i])) if data.task == REGRESSION else str(int(data.y[i])))
        if data.groups is not None:
            row.append(str(data.groups[i]))
        w.writerow(row)
