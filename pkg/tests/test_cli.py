import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from cpaudit import cli
from cpaudit.config import ExperimentConfig, load, loads
from cpaudit.errors import ConfigError, InvalidKeepProbability

FIXTURE = Path(__file__).parent / "data" / "synthetic_500.csv"

SMALL = """
# tiny mixture run
data.kind = mixture
data.n = 2000
data.mu = 20
methods = vcp, pt, pt_two_level, cqr, pt_cqr
alpha = 0.1
p = 0.96, 0.98
trials = 2
model.steps = 300
seed = 11
"""


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


def test_flat_and_json_configs_agree():
    flat = loads("data.kind = gaussian\nalpha = 0.1, 0.2\np = 0.95\nstability = yes\n")
    js = loads('{"data": {"kind": "gaussian"}, "alpha": [0.1, 0.2], "p": 0.95, '
               '"stability": true}')
    assert flat == js
    assert flat.alphas == (0.1, 0.2) and flat.stability


@pytest.mark.parametrize("text,path", [
    ("data.kind = poisson", "data.kind"),
    ("bogus = 1", "bogus"),
    ("trials = many", "trials"),
    ("trials = 0", "trials"),
    ("split = 0.5, 0.5", "split"),
    ("methods = vcp, lasso", "methods"),
    ("data.kind = csv", "data.path"),
    ("model.kind = oracle\ndata.kind = logistic", "model.kind"),
    ("stability = true\nrepeats = 1", "repeats"),
    ("trials = 1\ntrials = 2", "trials"),
])
def test_config_errors_name_the_field(text, path):
    with pytest.raises(ConfigError) as e:
        loads(text)
    assert e.value.path == path


def test_invalid_p_alpha_pair():
    with pytest.raises(ConfigError) as e:
        loads("alpha = 0.05\np = 0.94")
    assert e.value.path == "p"
    loads("alpha = 0.05\nmethods = vcp\np = 0.94")  # p unused without PT


def test_bad_json_and_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        loads("{not json")
    with pytest.raises(ConfigError):
        load(tmp_path / "missing.cfg")


def test_experiment_rows_and_p_one_consistency(tmp_path):
    cfg = loads(SMALL)
    reps = cli.run_experiment(cfg)
    assert [(r.method, r.p) for r in reps] == [
        ("vcp", 1.0), ("pt", 0.96), ("pt", 0.98), ("pt_two_level", 0.96),
        ("pt_two_level", 0.98), ("cqr", 1.0), ("pt_cqr", 0.96), ("pt_cqr", 0.98)]
    for r in reps:
        assert 0.85 < r.coverage < 0.95 and r.trials == 2
    same = cli.run_experiment(cfg.replace(methods=("vcp", "pt"), ps=(1.0,)))
    assert same[0].coverage == same[1].coverage
    assert same[0].mean_length == same[1].mean_length


def test_p_one_gives_identical_sets():
    cfg = loads(SMALL).replace(methods=("vcp", "pt"), ps=(1.0,))
    root = cli.RngStream(cli.mix(cfg.seed, 0))
    train, calib, test = cli.split_dataset(cli.load_data(cfg, root.child(0)), cfg.split,
                                           root.child(1))
    m = cli.build_methods(cfg, train, calib)
    a = m["vcp"].predict(test.X, 0.1)
    b = m["pt"](1.0).predict(test.X, 0.1, cli.RngStream(3))
    assert np.array_equal(a.lo, b.lo) and np.array_equal(a.hi, b.hi)


def test_classification_pipeline():
    cfg = loads("data.kind = logistic\ndata.n = 3000\ndata.k = 4\nmethods = vcp, pt\n"
                "p = 0.95\ntrials = 1\nmodel.bias = 1.5")
    vcp, pt = cli.run_experiment(cfg)
    assert 0.87 < vcp.coverage < 0.93 and 0.87 < pt.coverage < 0.93
    assert pt.kept_fraction < 1.0


def test_csv_source(tmp_path):
    cfg = loads(f"data.kind = csv\ndata.path = {FIXTURE}\nmethods = vcp\ntrials = 2")
    (rep,) = cli.run_experiment(cfg)
    assert rep.n_test == 125 and set(rep.group_coverage) == {"0", "1", "2", "3"}


def test_audit_rows():
    cfg = loads("data.kind = gaussian\ndata.n = 1200\nmethods = vcp, pt\np = 0.95, 1.0\n"
                "trials = 1\nrepeats = 200\nstability.points = 50")
    rows = cli.run_audit(cfg)
    assert rows[0]["interval_stability"] == 0.0
    assert rows[1]["interval_stability"] > 0
    assert rows[1]["interval_stability"] == pytest.approx(rows[1]["closed_form"], rel=0.15)
    assert rows[2]["interval_stability"] == 0.0
    assert cli.audit_csv(rows).splitlines()[0] == ",".join(cli.AUDIT_COLUMNS)


def test_theory_mixture_and_gaussian():
    mix = cli.run_theory(loads("data.kind = mixture\ndata.n = 20000"))
    for block in (mix["analytic"]["0.1"], mix["empirical"]["0.1"]):
        assert block["general_best_p"] is not None
        assert block["first_order"] == "holds" and block["secant"] is not None
    gauss = cli.run_theory(loads("data.kind = gaussian\ndata.n = 20000"))
    ana = gauss["analytic"]["0.1"]
    assert ana["general_best_p"] is None and ana["first_order"] == "fails"
    assert ana["secant"] is None and ana["locally_concave"] is False
    assert all(r["pt_length"] > r["vcp_length"] for r in gauss["gaussian_failure_case"]["0.1"])


def test_main_experiment_is_byte_identical(tmp_path, capsys):
    cfg = write(tmp_path, SMALL)
    outs = []
    for k in range(2):
        csv_path, js = tmp_path / f"r{k}.csv", tmp_path / f"r{k}.json"
        assert cli.main(["experiment", "--config", cfg, "--out", str(csv_path),
                         "--json", str(js)]) == 0
        outs.append((csv_path.read_bytes(), js.read_bytes()))
    assert outs[0] == outs[1]
    payload = json.loads(outs[0][1])
    assert payload["reports"][0]["half_length"] == payload["reports"][0]["mean_length"] / 2


def test_main_seed_override_changes_output(tmp_path, capsys):
    cfg = write(tmp_path, SMALL.replace("trials = 2", "trials = 1"))
    cli.main(["experiment", "--config", cfg, "--out", "-"])
    a = capsys.readouterr().out
    cli.main(["experiment", "--config", cfg, "--out", "-", "--seed", "12"])
    b = capsys.readouterr().out
    assert a.splitlines()[0] == b.splitlines()[0] and a != b


def test_main_synth_round_trips(tmp_path):
    out = tmp_path / "d.csv"
    cfg = write(tmp_path, "data.kind = gaussian\ndata.groups = 3")
    assert cli.main(["synth", "--config", cfg, "--n", "50", "--out", str(out)]) == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "f0,f1,target,group" and len(lines) == 51


def test_main_quantile(capsys):
    assert cli.main(["quantile", "--scores", ",".join(str(i) for i in range(1, 20)),
                     "--alpha", "0.1", "--alpha", "0.01", "--out", "-"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out == ["alpha,n,threshold", "0.1,19,18.0", "0.01,19,inf"]


def test_main_quantile_from_config(tmp_path, capsys):
    cfg = write(tmp_path, "data.kind = gaussian\ndata.n = 400\nalpha = 0.1, 0.2")
    assert cli.main(["quantile", "--config", cfg, "--out", "-"]) == 0
    rows = capsys.readouterr().out.splitlines()
    assert len(rows) == 3 and float(rows[1].split(",")[2]) > float(rows[2].split(",")[2])


def test_main_theory_writes_json_and_curve(tmp_path):
    out, curve = tmp_path / "t.json", tmp_path / "c.csv"
    cfg = write(tmp_path, "data.kind = mixture\ndata.n = 4000")
    assert cli.main(["theory", "--config", cfg, "--out", str(out), "--curve", str(curve)]) == 0
    assert json.loads(out.read_text())["curve"]["provenance"] == "empirical"
    assert curve.read_text().startswith("level,length\n0.5,")


@pytest.mark.parametrize("text,code", [
    ("data.kind = poisson", 2),
    ("alpha = 0.05\np = 0.9", 2),
    ("data.kind = csv\ndata.path = /nonexistent/x.csv", 3),
    ("data.n = 4\nsplit = 0.98, 0.01, 0.01", 3),
])
def test_main_exit_codes(tmp_path, capsys, text, code):
    assert cli.main(["experiment", "--config", write(tmp_path, text), "--out", "-"]) == code
    assert "cpaudit:" in capsys.readouterr().err


def test_main_numeric_exit_code(tmp_path, capsys):
    # 9 calibration points cannot support alpha = 0.01: infinite sets poison the variance
    text = "data.kind = gaussian\ndata.n = 36\nalpha = 0.01\nmethods = vcp\ntrials = 1"
    assert cli.main(["audit", "--config", write(tmp_path, text), "--out", "-"]) == 4


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "cpaudit", "quantile", "--scores", "1,2,3",
                        "--alpha", "0.5", "--out", "-"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.splitlines()[1] == "0.5,3,2.0"
