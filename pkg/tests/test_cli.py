import csv
import hashlib
import json
import subprocess
import sys

import pytest

from mqrlr.cli import main
from mqrlr.errors import SolverFailure


def run(*argv) -> int:
    return main([str(a) for a in argv])


def digest(path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def series_csv(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    assert run("synth", "--beta1", 0.3, "--n", 400, "--seed", 7, "--out", d) == 0
    return d / "series.csv"


def test_synth_writes_rows_and_is_reproducible(series_csv, tmp_path):
    assert len(series_csv.read_text().splitlines()) == 401
    assert run("synth", "--beta1", 0.3, "--n", 400, "--seed", 7, "--out", tmp_path) == 0
    assert (tmp_path / "series.csv").read_bytes() == series_csv.read_bytes()


def test_synth_rejects_nonstationary(tmp_path, capsys):
    assert run("synth", "--beta1", 1.5, "--out", tmp_path) == 2
    assert "stationary" in capsys.readouterr().err
    assert not (tmp_path / "series.csv").exists()


@pytest.mark.parametrize("lam,gamma,label", [(0, 0, "MQR-B1"), (1, 0, "MQR-B2"), (1, 1, "MQR-LR")])
def test_estimate_labels(series_csv, tmp_path, lam, gamma, label):
    assert run("estimate", "--input", series_csv, "--lam", lam, "--gamma", gamma, "--out", tmp_path) == 0
    assert json.loads((tmp_path / "model.json").read_text())["label"] == label
    rows = list(csv.reader((tmp_path / "coefficients.csv").open()))
    assert rows[0] == ["alpha", "covariate", "value"] and len(rows) == 1 + 19 * 2


def test_estimate_dump_lp(series_csv, tmp_path):
    lp = tmp_path / "lp.txt"
    assert run("estimate", "--input", series_csv, "--grid", "0.1,0.5,0.9", "--dump-lp", lp, "--out", tmp_path) == 0
    assert lp.read_text().startswith("# mqrlr-lp 1\n")


def test_estimate_missing_value_column(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("x\n1\n")
    assert run("estimate", "--input", bad, "--out", tmp_path) == 2
    assert "bad.csv" in capsys.readouterr().err


def test_estimate_requires_input(tmp_path, capsys):
    assert run("estimate", "--out", tmp_path) == 2
    assert "--input" in capsys.readouterr().err


def test_solver_failure_surfaces_stage(series_csv, tmp_path, monkeypatch, capsys):
    import mqrlr.mqr as mqr
    monkeypatch.setattr(mqr, "fit_normalized", lambda *a, **k: (_ for _ in ()).throw(SolverFailure("stuck")))
    assert run("estimate", "--input", series_csv, "--out", tmp_path) == 3
    assert "[pilot] stuck" in capsys.readouterr().err


def test_calibrate_outputs(series_csv, tmp_path):
    args = ["calibrate", "--input", series_csv, "--window", 100, "--n-windows", 10, "--out", tmp_path]
    assert run(*args, "--lambdas", "0", "--gammas", "0") == 0
    report = list(csv.DictReader((tmp_path / "calibration_report.csv").open()))
    assert [r["model"] for r in report] == ["MQR-B1 (SIC)", "MQR-B1 (MAE)", "MQR-B1"]
    assert run(*args, "--lambdas", "0,1", "--gammas", "0,1,7", "--metric", "sic") == 0
    assert len((tmp_path / "heatmap.csv").read_text().splitlines()) == 1 + 2 * 3
    report = list(csv.DictReader((tmp_path / "calibration_report.csv").open()))
    assert report[0]["model"].endswith("(SIC)")
    assert list(report[0]) == ["model", "horizon", "lambda", "gamma", "sic", "mae_percent"]


def test_calibrate_too_short_series(series_csv, tmp_path, capsys):
    assert run("calibrate", "--input", series_csv, "--window", 300, "--n-windows", 200, "--out", tmp_path) == 2
    assert "too short" in capsys.readouterr().err


@pytest.fixture()
def model_file(series_csv, tmp_path):
    assert run("estimate", "--input", series_csv, "--out", tmp_path / "m") == 0
    return tmp_path / "m" / "model.json"


def test_simulate_single_draw(model_file, series_csv, tmp_path):
    out = tmp_path / "s"
    assert run("simulate", "--model", model_file, "--history", series_csv, "--steps", 1, "--paths", 1,
               "--out", out) == 0
    assert len((out / "scenarios.csv").read_text().splitlines()) == 2
    assert len((out / "fans.csv").read_text().splitlines()) == 1 + 19


def test_simulate_seed_determinism_and_clamp(model_file, series_csv, tmp_path):
    base = ["simulate", "--model", model_file, "--history", series_csv, "--steps", 4, "--paths", 200,
            "--clamp", -0.5, 0.5]
    assert run(*base, "--seed", 3, "--out", tmp_path / "a") == 0
    assert run(*base, "--seed", 3, "--out", tmp_path / "b") == 0
    assert run(*base, "--seed", 4, "--out", tmp_path / "c") == 0
    for name in ("scenarios.csv", "fans.csv"):
        assert digest(tmp_path / "a" / name) == digest(tmp_path / "b" / name)
    assert digest(tmp_path / "a" / "scenarios.csv") != digest(tmp_path / "c" / "scenarios.csv")
    values = [float(r["value"]) for r in csv.DictReader((tmp_path / "a" / "scenarios.csv").open())]
    assert min(values) >= -0.5 and max(values) <= 0.5


def test_simulate_bad_clamp(model_file, series_csv, tmp_path):
    assert run("simulate", "--model", model_file, "--history", series_csv, "--clamp", 1, 0, "--out", tmp_path) == 2


def test_backtest_smoke(series_csv, tmp_path):
    assert run("backtest", "--input", series_csv, "--window", 100, "--n-windows", 20, "--lam", 1, "--gamma", 1,
               "--out", tmp_path) == 0
    report = list(csv.DictReader((tmp_path / "backtest_report.csv").open()))
    assert report[0]["model"] == "MQR-LR"
    assert list(report[0])[:6] == ["model", "horizon", "lambda", "gamma", "sic", "mae_percent"]
    assert len((tmp_path / "backtest.csv").read_text().splitlines()) == 21
    assert len((tmp_path / "probprob.csv").read_text().splitlines()) == 20


def test_backtest_failure_rate_exit_code(series_csv, tmp_path, monkeypatch, capsys):
    import mqrlr.calibrate as cal
    monkeypatch.setattr(cal, "estimate", lambda *a, **k: (_ for _ in ()).throw(SolverFailure("no")))
    assert run("backtest", "--input", series_csv, "--window", 100, "--n-windows", 20, "--out", tmp_path) == 3
    assert "windows failed" in capsys.readouterr().err
    assert not (tmp_path / "backtest.csv").exists()


def test_ar1study_smoke(tmp_path):
    assert run("ar1study", "--replications", 1, "--n", 100, "--gamma-grid", "0.1,1", "--out", tmp_path) == 0
    assert len((tmp_path / "ar1_slopes.csv").read_text().splitlines()) == 1 + 2 * 19


def test_config_file_and_flag_precedence(series_csv, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"lam": 2.0, "gamma": 0.5, "grid": [0.1, 0.5, 0.9], "out": str(tmp_path / "o")}))
    assert run("estimate", "--config", cfg, "--input", series_csv) == 0
    doc = json.loads((tmp_path / "o" / "model.json").read_text())
    assert doc["theta"] == {"lambda": 2.0, "gamma": 0.5} and doc["grid"] == [0.1, 0.5, 0.9]
    assert run("estimate", "--config", cfg, "--input", series_csv, "--gamma", 0) == 0
    assert json.loads((tmp_path / "o" / "model.json").read_text())["label"] == "MQR-B2"


def test_config_unknown_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"lamda": 1}')
    assert run("synth", "--config", cfg, "--out", tmp_path) == 2


def test_env_overrides_config_out(tmp_path, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"out": str(tmp_path / "from_config")}))
    monkeypatch.setenv("MQRLR_OUT", str(tmp_path / "from_env"))
    assert run("synth", "--n", 60, "--config", cfg) == 0
    assert (tmp_path / "from_env" / "series.csv").exists()
    assert run("synth", "--n", 60, "--out", tmp_path / "flag") == 0
    assert (tmp_path / "flag" / "series.csv").exists()


def test_inputs_are_not_modified(series_csv, model_file, tmp_path):
    before = digest(series_csv), digest(model_file)
    run("estimate", "--input", series_csv, "--out", tmp_path / "e")
    run("simulate", "--model", model_file, "--history", series_csv, "--out", tmp_path / "s", "--paths", 10)
    assert (digest(series_csv), digest(model_file)) == before


def test_invalid_tolerance(series_csv, tmp_path):
    assert run("estimate", "--input", series_csv, "--feas-tol", 0, "--out", tmp_path) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "mqrlr", "synth", "--n", "60", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and (tmp_path / "series.csv").exists()
    proc = subprocess.run([sys.executable, "-m", "mqrlr", "bogus"], capture_output=True, text=True)
    assert proc.returncode == 2
