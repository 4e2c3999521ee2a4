"""Experiment harness and command-line entry point.

Pipeline per trial ``t``: derive ``seed_t = mix(seed, t)``, generate (or
re-split) data, fit, calibrate, wrap and audit every method at every
``(alpha, p)``. Trial results are reduced in trial order, so reports are a
pure function of the configuration.
"""
from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from dataclasses import asdict
from typing import Optional

import numpy as np

from . import theory
from .config import ExperimentConfig, load
from .conformal import CalibratedPredictor, VCPMethod, calibrate, vcp_threshold
from .core import REGRESSION, RngStream, mix, read_csv, split_dataset, write_csv
from .errors import ConfigError, CPAuditError
from .metrics import (aggregate, dumps_json, evaluate, interval_stability,
                      stability_closed_form, write_reports_csv)
from .metrics import _fmt as fmt_value
from .models import (LinearMean, fit_linear_mean, fit_linear_quantile, fit_logistic,
                     inject_bias)
from .pt import PTMethod
from .scores import ABS_RESIDUAL, CQR, SOFTMAX
from .synth import SynthSpec, generate

AUDIT_COLUMNS = ("method", "alpha", "p", "interval_stability", "stability_se",
                 "meaningful_length", "closed_form", "repeats", "trials")


# ---------------------------------------------------------------------------
# pipeline pieces


def synth_spec(cfg: ExperimentConfig, seed: Optional[int] = None) -> SynthSpec:
    if cfg.data_kind == "csv":
        raise ConfigError("no synthetic spec for csv data", "data.kind")
    return SynthSpec(kind=cfg.data_kind, n=cfg.n, beta=cfg.beta, mu=cfg.mu, sigma=cfg.sigma,
                     k=cfg.k, d=cfg.d,
                     weights=None if cfg.weights is None else
                     np.asarray(cfg.weights).reshape(cfg.d, cfg.k),
                     n_groups=cfg.n_groups, seed=cfg.seed if seed is None else seed)


def load_data(cfg: ExperimentConfig, rng: RngStream):
    if cfg.data_kind == "csv":
        return read_csv(cfg.data_path)
    return generate(synth_spec(cfg), rng)


def build_methods(cfg: ExperimentConfig, train, calib) -> dict:
    """Calibrated handles for each configured method, keyed by name.

    PT entries are factories ``p -> PTMethod`` since p varies per row.
    """
    names = set(cfg.methods)
    out = {}
    if train.task == REGRESSION:
        if names & {"vcp", "pt", "pt_two_level"}:
            if cfg.model_kind == "oracle":
                mean = LinearMean(np.asarray(cfg.beta, dtype=np.float64), 0.0)
            elif cfg.model_kind == "logistic":
                raise ConfigError("logistic model needs classification data", "model.kind")
            else:
                mean = fit_linear_mean(train)
            cp = calibrate(inject_bias(mean, cfg.bias), ABS_RESIDUAL, calib)
            out["vcp"] = VCPMethod(cp, "vcp")
            out["pt"] = lambda p, cp=cp: PTMethod(cp, p, name="pt")
            out["pt_two_level"] = lambda p, cp=cp: PTMethod(cp, p, "two_level", cfg.alpha1,
                                                            name="pt_two_level")
        if names & {"cqr", "pt_cqr"}:
            q = fit_linear_quantile(train, steps=cfg.steps, lr=cfg.lr)
            cq = calibrate(inject_bias(q, cfg.bias), CQR, calib)
            out["cqr"] = VCPMethod(cq, "cqr")
            out["pt_cqr"] = lambda p, cq=cq: PTMethod(cq, p, name="pt_cqr")
    else:
        k = cfg.k if cfg.data_kind == "logistic" else None
        model = inject_bias(fit_logistic(train, k), cfg.bias)
        cp = calibrate(model, SOFTMAX, calib)
        out["vcp"] = VCPMethod(cp, "vcp")
        out["pt"] = lambda p, cp=cp: PTMethod(cp, p, name="pt")
        out["pt_two_level"] = lambda p, cp=cp: PTMethod(cp, p, "two_level", cfg.alpha1,
                                                        name="pt_two_level")
    return out


def _cells(cfg: ExperimentConfig):
    """(method name, alpha, p) in output order; deterministic methods use p = 1."""
    for m in cfg.methods:
        for a in cfg.alphas:
            if m.startswith("pt"):
                for p in cfg.ps:
                    yield m, a, p
            else:
                yield m, a, 1.0


def _handle(methods, name, p):
    h = methods[name]
    return h if hasattr(h, "predict") else h(p)


def trial_reports(cfg: ExperimentConfig, t: int) -> list:
    root = RngStream(mix(cfg.seed, t))
    data = load_data(cfg, root.child(0))
    train, calib, test = split_dataset(data, cfg.split, root.child(1))
    methods = build_methods(cfg, train, calib)
    evals = root.child(2)
    out = []
    for j, (name, a, p) in enumerate(_cells(cfg)):
        method = _handle(methods, name, p)
        rng = evals.child(j)
        rep = evaluate(method, test, a, rng.child(0))
        if cfg.stability:
            pts = test.take(np.arange(min(cfg.stability_points, len(test))))
            rep.interval_stability = interval_stability(method, pts, a, cfg.repeats,
                                                        rng.child(1))
        rep.seed = cfg.seed
        out.append(rep)
    return out


def run_experiment(cfg: ExperimentConfig) -> list:
    """Aggregated :class:`AuditReport` per method x alpha x p over ``cfg.trials``."""
    per_trial = [trial_reports(cfg, t) for t in range(cfg.trials)]
    return [aggregate([trial[j] for trial in per_trial], cfg.seed)
            for j in range(len(per_trial[0]))]


def run_audit(cfg: ExperimentConfig) -> list:
    """Interval-stability table; one dict per method x alpha x p."""
    reports = run_experiment(cfg.replace(stability=True))
    rows = []
    for r in reports:
        closed = (stability_closed_form(r.p, r.meaningful_length)
                  if r.method != "pt_two_level" else float("nan"))
        rows.append({"method": r.method, "alpha": r.alpha, "p": r.p,
                     "interval_stability": r.interval_stability,
                     "stability_se": r.stability_se,
                     "meaningful_length": r.meaningful_length, "closed_form": closed,
                     "repeats": cfg.repeats, "trials": r.trials})
    return rows


def _p_grid(alpha: float) -> np.ndarray:
    lo = 1.0 - alpha + 0.005
    return np.round(np.arange(lo, 1.0 - 1e-9, 0.01), 10)


def _verdicts(curve, alpha: float) -> dict:
    fo = theory.check_first_order(curve, alpha)
    sec = theory.check_secant(curve, alpha)
    try:
        concave = theory.check_local_concavity(curve, alpha)
    except CPAuditError:
        concave = None
    return {
        "general_best_p": theory.check_general_condition(curve, alpha, _p_grid(alpha)),
        "first_order": fo.verdict, "first_order_ratio": fo.ratio,
        "first_order_slope": fo.slope,
        "secant": None if sec is None else {"u": sec[0], "p": sec[1]},
        "locally_concave": concave,
        "length_at_target": curve(1.0 - alpha),
    }


def run_theory(cfg: ExperimentConfig) -> dict:
    """Length curve of the trial-0 base predictor and every checker's verdict."""
    root = RngStream(mix(cfg.seed, 0))
    data = load_data(cfg, root.child(0))
    train, calib, test = split_dataset(data, cfg.split, root.child(1))
    base = build_methods(cfg.replace(methods=("vcp",)), train, calib)["vcp"]
    probe = test.X[:100]
    curve = theory.build_length_curve(base.cp, theory.DEFAULT_GRID, probe)
    out = {"curve": curve, "empirical": {}, "analytic": {}}
    analytic = None
    if cfg.data_kind == "mixture":
        analytic = theory.mixture_length_curve(cfg.mu)
    elif cfg.data_kind == "gaussian":
        analytic = theory.gaussian_length_curve(cfg.sigma)
    for a in cfg.alphas:
        key = repr(float(a))
        out["empirical"][key] = _verdicts(curve, a)
        if analytic is not None:
            out["analytic"][key] = _verdicts(analytic, a)
        if cfg.data_kind == "gaussian":
            out.setdefault("gaussian_failure_case", {})[key] = [
                dict(zip(("p", "vcp_length", "pt_length"),
                         (float(p),) + theory.gaussian_failure_case(a, float(p))))
                for p in _p_grid(a)]
    return out


# ---------------------------------------------------------------------------
# output helpers


def _open_out(path):
    if path in (None, "-"):
        return None
    return open(path, "w", encoding="utf-8", newline="")


def _emit(text: str, path) -> None:
    fh = _open_out(path)
    if fh is None:
        sys.stdout.write(text)
        return
    with fh:
        fh.write(text)


def _csv_text(writer) -> str:
    buf = io.StringIO()
    writer(buf)
    return buf.getvalue()


def reports_payload(cfg: ExperimentConfig, reports) -> dict:
    return {"config": asdict(cfg), "reports": [r.to_dict() for r in reports]}


def audit_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AUDIT_COLUMNS)
    for r in rows:
        w.writerow([fmt_value(r[c]) for c in AUDIT_COLUMNS])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# argument parsing


def _config(args) -> ExperimentConfig:
    cfg = load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def cmd_synth(args) -> int:
    cfg = _config(args)
    if args.n is not None:
        cfg = cfg.replace(n=args.n)
    data = generate(synth_spec(cfg), RngStream(cfg.seed))
    _emit(_csv_text(lambda fh: write_csv(data, fh)), args.out)
    return 0


def cmd_experiment(args) -> int:
    cfg = _config(args)
    reports = run_experiment(cfg)
    _emit(_csv_text(lambda fh: write_reports_csv(reports, fh)), args.out or cfg.out_csv)
    json_path = args.json or cfg.out_json
    if json_path:
        _emit(dumps_json(reports_payload(cfg, reports)), json_path)
    return 0


def cmd_audit(args) -> int:
    cfg = _config(args)
    _emit(audit_csv(run_audit(cfg)), args.out or cfg.out_csv)
    return 0


def cmd_theory(args) -> int:
    cfg = _config(args)
    res = run_theory(cfg)
    curve = res["curve"]
    res["curve"] = {"levels": curve.levels, "lengths": curve.lengths,
                    "provenance": curve.provenance}
    _emit(dumps_json(res), args.out or cfg.out_json)
    if args.curve:
        _emit(_csv_text(curve.write_csv), args.curve)
    return 0


def cmd_quantile(args) -> int:
    if args.scores is not None:
        scores = [float(s) for s in args.scores.split(",") if s.strip()]
        cp = CalibratedPredictor(None, ABS_RESIDUAL, np.asarray(scores))
        alphas = args.alpha or [0.1]
    else:
        cfg = _config(args)
        root = RngStream(mix(cfg.seed, 0))
        train, calib, _ = split_dataset(load_data(cfg, root.child(0)), cfg.split,
                                        root.child(1))
        cp = build_methods(cfg.replace(methods=("vcp",)), train, calib)["vcp"].cp
        alphas = args.alpha or list(cfg.alphas)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["alpha", "n", "threshold"])
    for a in alphas:
        w.writerow([repr(float(a)), cp.n, repr(vcp_threshold(cp, a))])
    _emit(buf.getvalue(), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cpaudit",
                                 description="Audit randomized conformal predictors.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value or JSON config file")
        p.add_argument("--seed", type=int, help="override the base seed")
        p.add_argument("--out", help="output path ('-' for stdout)")
        return p

    p = common(sub.add_parser("synth", help="generate synthetic data as CSV"))
    p.add_argument("--n", type=int, help="override the sample count")
    p.set_defaults(func=cmd_synth)
    p = common(sub.add_parser("experiment", help="coverage/length audit over trials"))
    p.add_argument("--json", help="also write the JSON report here")
    p.set_defaults(func=cmd_experiment)
    p = common(sub.add_parser("audit", help="interval-stability table"))
    p.set_defaults(func=cmd_audit)
    p = common(sub.add_parser("theory", help="length curve and sufficient-condition verdicts"))
    p.add_argument("--curve", help="write the (level, length) curve CSV here")
    p.set_defaults(func=cmd_theory)
    p = common(sub.add_parser("quantile", help="print split-CP thresholds"))
    p.add_argument("--scores", help="comma-separated calibration scores")
    p.add_argument("--alpha", type=float, action="append", help="miscoverage (repeatable)")
    p.set_defaults(func=cmd_quantile)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CPAuditError as e:
        print(f"cpaudit: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except BrokenPipeError:
        # downstream closed early (e.g. piped into head); not an error
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0
    except OSError as e:
        print(f"cpaudit: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
