"""Synthetic regression and classification data.

Rows are produced in blocks of :data:`BLOCK` samples, block ``j`` drawing
from child stream ``j`` so any block can be regenerated on its own.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels as K
from .core import CLASSIFICATION, REGRESSION, Dataset, RngStream, as_stream
from .errors import ConfigError

BLOCK = 1024
KINDS = ("mixture", "gaussian", "logistic")


def default_class_weights(d: int, k: int, scale: float = 2.0) -> np.ndarray:
    """``(d, k)`` weights placing class directions evenly on a circle in the
    first two coordinates."""
    W = np.zeros((d, k))
    ang = 2.0 * np.pi * np.arange(k) / k
    W[0] = scale * np.cos(ang)
    if d > 1:
        W[1] = scale * np.sin(ang)
    return W


@dataclass(frozen=True)
class SynthSpec:
    kind: str = "mixture"
    n: int = 1000
    beta: tuple = (1.0, -1.0)
    mu: float = 20.0
    sigma: float = 1.0
    k: int = 3
    d: int = 2
    weights: Optional[np.ndarray] = field(default=None, compare=False)
    n_groups: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown data kind {self.kind!r}; expected one of {KINDS}",
                              "data.kind")
        if self.n < 1:
            raise ConfigError("n must be >= 1", "data.n")
        if self.mu < 0:
            raise ConfigError("mu must be >= 0", "data.mu")
        if not self.sigma > 0:
            raise ConfigError("sigma must be > 0", "data.sigma")
        if self.k < 2:
            raise ConfigError("k must be >= 2", "data.k")
        if self.n_groups < 0:
            raise ConfigError("n_groups must be >= 0", "data.groups")
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if self.kind != "logistic" and len(self.beta) == 0:
            raise ConfigError("beta must be non-empty", "data.beta")
        if self.weights is not None:
            W = np.asarray(self.weights, dtype=np.float64)
            if W.shape != (self.d, self.k):
                raise ConfigError(f"weights must have shape ({self.d}, {self.k}), got {W.shape}",
                                  "data.weights")
            object.__setattr__(self, "weights", W)

    @property
    def dim(self) -> int:
        return self.d if self.kind == "logistic" else len(self.beta)

    @property
    def class_weights(self) -> np.ndarray:
        return self.weights if self.weights is not None else default_class_weights(self.d, self.k)


def standard_normal(rng: RngStream) -> float:
    """One standard normal draw (inverse-CDF transform of one uniform)."""
    return float(as_stream(rng).normals(1)[0])


def _block(spec: SynthSpec, s: RngStream, rows: int):
    d = spec.dim
    X = s.normals(rows * d).reshape(rows, d)
    if spec.kind == "logistic":
        Z = X @ spec.class_weights
        Z -= Z.max(axis=1, keepdims=True)
        P = np.exp(Z)
        P /= P.sum(axis=1, keepdims=True)
        u = s.uniforms(rows)
        cum = np.cumsum(P, axis=1)
        y = np.minimum((cum < u[:, None]).sum(axis=1), spec.k - 1)
        return X, y
    beta = np.asarray(spec.beta)
    if spec.kind == "mixture":
        sign = np.where(s.uniforms(rows) < 0.5, 1.0, -1.0)
        eps = sign * spec.mu + s.normals(rows)
    else:
        eps = spec.sigma * s.normals(rows)
    return X, X @ beta + eps


def generate(spec: SynthSpec, rng=None, role: str = "train") -> Dataset:
    """Draw ``spec.n`` i.i.d. samples; ``rng`` defaults to a stream keyed by ``spec.seed``.

    With ``n_groups > 0`` samples are tagged by equal-mass bins of the first
    feature, ``floor(Phi(x_0) * n_groups)``.
    """
    base = (RngStream(spec.seed) if rng is None else as_stream(rng)).spawn()
    Xs, ys = [], []
    for j, start in enumerate(range(0, spec.n, BLOCK)):
        X, y = _block(spec, base.child(j), min(BLOCK, spec.n - start))
        Xs.append(X)
        ys.append(y)
    X, y = np.concatenate(Xs), np.concatenate(ys)
    groups = None
    if spec.n_groups:
        g = np.floor(K.ndtr(X[:, 0]) * spec.n_groups).astype(np.int64)
        groups = np.minimum(g, spec.n_groups - 1).astype(str)
    task = CLASSIFICATION if spec.kind == "logistic" else REGRESSION
    return Dataset(X, y, task, groups, role)
