"""Experiment configuration.

Two formats are accepted: flat ``key = value`` lines with dotted sections
(``data.kind = mixture``, ``pt.alpha1 = 0.99``; ``#`` starts a comment), or
a JSON object when the text starts with ``{`` (nested objects are flattened
into the same dotted keys). List values are comma separated.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

from .errors import ConfigError

METHODS = ("vcp", "pt", "pt_two_level", "cqr", "pt_cqr")
MODEL_KINDS = ("linear", "quantile", "logistic", "oracle")
DATA_KINDS = ("mixture", "gaussian", "logistic", "csv")


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _list(conv):
    def parse(s):
        return tuple(conv(x.strip()) for x in str(s).split(",") if x.strip())
    return parse


# dotted key -> (field name, parser)
SCHEMA = {
    "data.kind": ("data_kind", str),
    "data.n": ("n", int),
    "data.mu": ("mu", float),
    "data.sigma": ("sigma", float),
    "data.beta": ("beta", _list(float)),
    "data.k": ("k", int),
    "data.d": ("d", int),
    "data.weights": ("weights", _list(float)),
    "data.groups": ("n_groups", int),
    "data.path": ("data_path", str),
    "split": ("split", _list(float)),
    "model.kind": ("model_kind", str),
    "model.bias": ("bias", float),
    "model.steps": ("steps", int),
    "model.lr": ("lr", float),
    "methods": ("methods", _list(str)),
    "alpha": ("alphas", _list(float)),
    "p": ("ps", _list(float)),
    "pt.alpha1": ("alpha1", float),
    "trials": ("trials", int),
    "repeats": ("repeats", int),
    "stability": ("stability", _bool),
    "stability.points": ("stability_points", int),
    "seed": ("seed", int),
    "out.csv": ("out_csv", str),
    "out.json": ("out_json", str),
}
_KEY_OF = {name: key for key, (name, _) in SCHEMA.items()}


@dataclass(frozen=True)
class ExperimentConfig:
    data_kind: str = "mixture"
    n: int = 4000
    mu: float = 20.0
    sigma: float = 1.0
    beta: tuple = (1.0, -1.0)
    k: int = 3
    d: int = 2
    weights: Optional[tuple] = None
    n_groups: int = 0
    data_path: Optional[str] = None
    split: tuple = (0.5, 0.25, 0.25)
    model_kind: str = "linear"
    bias: float = 0.0
    steps: int = 2000
    lr: float = 0.05
    methods: tuple = ("vcp", "pt")
    alphas: tuple = (0.1,)
    ps: tuple = (0.95,)
    alpha1: float = 0.99
    trials: int = 5
    repeats: int = 100
    stability: bool = False
    stability_points: int = 200
    seed: int = 0
    out_csv: Optional[str] = None
    out_json: Optional[str] = None

    def __post_init__(self):
        def bad(name, msg):
            raise ConfigError(msg, _KEY_OF[name])

        if self.data_kind not in DATA_KINDS:
            bad("data_kind", f"expected one of {DATA_KINDS}, got {self.data_kind!r}")
        if self.data_kind == "csv" and not self.data_path:
            bad("data_path", "data.kind=csv needs data.path")
        if self.model_kind not in MODEL_KINDS:
            bad("model_kind", f"expected one of {MODEL_KINDS}, got {self.model_kind!r}")
        if self.model_kind == "oracle" and self.data_kind not in ("mixture", "gaussian"):
            bad("model_kind", "the oracle model needs synthetic regression data")
        if not self.methods or any(m not in METHODS for m in self.methods):
            bad("methods", f"methods must be drawn from {METHODS}, got {self.methods}")
        if self.data_kind == "logistic" and any("cqr" in m for m in self.methods):
            bad("methods", "cqr methods need a regression task")
        if len(self.split) != 3 or any(f <= 0 for f in self.split) or \
                abs(sum(self.split) - 1.0) > 1e-9:
            bad("split", "split needs three positive fractions summing to 1")
        if not self.alphas or any(not 0.0 < a < 1.0 for a in self.alphas):
            bad("alphas", "every alpha must lie in (0, 1)")
        if any(m.startswith("pt") for m in self.methods):
            if not self.ps:
                bad("ps", "PT methods need at least one p")
            for a in self.alphas:
                for p in self.ps:
                    if not 1.0 - a < p <= 1.0:
                        bad("ps", f"p={p} outside (1-alpha, 1] for alpha={a}")
        if self.trials < 1:
            bad("trials", "trials must be >= 1")
        if self.stability and self.repeats < 2:
            bad("repeats", "repeats must be >= 2 when stability is requested")
        if self.stability_points < 1:
            bad("stability_points", "stability.points must be >= 1")
        if self.n < 3:
            bad("n", "need at least one sample per split fold")

    def replace(self, **kw) -> "ExperimentConfig":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(kw)
        return ExperimentConfig(**d)


def _flatten(obj, prefix=""):
    out = {}
    for k, v in obj.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, list):
            out[key] = ",".join(str(x) for x in v)
        else:
            out[key] = str(v) if not isinstance(v, bool) else ("true" if v else "false")
    return out


def parse_pairs(text: str) -> dict:
    if text.lstrip().startswith("{"):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON: {e}") from None
        if not isinstance(obj, dict):
            raise ConfigError("JSON config must be an object")
        return _flatten(obj)
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key", key)
        pairs[key] = value
    return pairs


def from_pairs(pairs: dict) -> ExperimentConfig:
    kw = {}
    for key, value in pairs.items():
        if key not in SCHEMA:
            raise ConfigError("unknown key", key)
        name, conv = SCHEMA[key]
        try:
            kw[name] = conv(value)
        except ValueError as e:
            raise ConfigError(f"cannot parse {value!r}: {e}", key) from None
    return ExperimentConfig(**kw)


def loads(text: str) -> ExperimentConfig:
    return from_pairs(parse_pairs(text))


def load(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}", str(path)) from None
    return loads(text)
