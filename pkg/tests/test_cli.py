import json

import numpy as np
import pytest

from tarnet.cli import build_parser, main
from tarnet.persistence import load_model
from tarnet.pipeline import evaluate, read_series_csv


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def sim25(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    assert run("simulate", "--n", 25, "--p", 3, "--ranks", "2,2,2", "--t", 200, "--seed", 1,
               "--out", d / "s.csv") == 0
    return d


def test_simulate_rows_and_sidecar(tmp_path):
    out = tmp_path / "s.csv"
    assert run("simulate", "--n", 9, "--p", 3, "--ranks", "2,2,2", "--t", 400, "--seed", 7, "--out", out) == 0
    s = read_series_csv(out)
    assert len(s) == 403 and s.names[0] == "y1"
    side = json.loads((tmp_path / "s.json").read_text())
    assert side["weights"]["dims"] == [9, 9, 3]
    assert 0 < side["spectral"]["mu_min"] <= side["spectral"]["mu_max"]
    assert side["spectral"]["m_constant"] > 0


def test_simulate_deterministic(tmp_path):
    for name in ("a", "b"):
        assert run("simulate", "--n", 5, "--p", 2, "--ranks", "2,2,1", "--t", 50, "--seed", 3,
                   "--dgp", "nl", "--out", tmp_path / f"{name}.csv") == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_simulate_bad_ranks(tmp_path, capsys):
    code = run("simulate", "--n", 9, "--p", 3, "--ranks", "10,2,2", "--t", 50, "--out", tmp_path / "x.csv")
    assert code == 1
    assert "rank" in capsys.readouterr().err


def test_fit_ltr_parameter_count(sim25, capsys):
    assert run("fit", "--method", "ltr", "--ranks", "2,2,2", "--lags", 3, "--input", sim25 / "s.csv",
               "--model-out", sim25 / "ltr.json", "--max-epochs", 3000) == 0
    capsys.readouterr()
    assert run("inspect", "--model", sim25 / "ltr.json") == 0
    assert "parameters  114" in capsys.readouterr().out


def test_fit_ols_twice_identical(sim25):
    for name in ("o1", "o2"):
        assert run("fit", "--method", "ols", "--lags", 3, "--input", sim25 / "s.csv",
                   "--model-out", sim25 / f"{name}.json") == 0
    assert (sim25 / "o1.json").read_bytes() == (sim25 / "o2.json").read_bytes()


def test_identity_tar_equals_ltr(sim25):
    common = ("--ranks", "2,2,2", "--lags", 3, "--input", sim25 / "s.csv", "--max-epochs", 500)
    assert run("fit", "--method", "ltr", *common, "--model-out", sim25 / "a.json") == 0
    assert run("fit", "--method", "tar", "--activation", "identity", *common,
               "--model-out", sim25 / "b.json") == 0
    a, b = load_model(sim25 / "a.json"), load_model(sim25 / "b.json")
    x = np.random.default_rng(0).standard_normal((75, 10))
    np.testing.assert_allclose(a.predict(x), b.predict(x), atol=1e-8)


def test_forecast_metrics_match_files(sim25, tmp_path, capsys):
    assert run("fit", "--method", "ols", "--lags", 3, "--input", sim25 / "s.csv",
               "--model-out", tmp_path / "m.json") == 0
    capsys.readouterr()
    assert run("forecast", "--model", tmp_path / "m.json", "--input", sim25 / "s.csv",
               "--train-len", 150, "--test-len", 53, "--out", tmp_path / "p.csv",
               "--per-variable", "y4", "--trace-out", tmp_path / "t.csv") == 0
    printed = [float(v) for v in capsys.readouterr().out.splitlines()[1].split()]
    preds = read_series_csv(tmp_path / "p.csv").values.T
    truth = read_series_csv(sim25 / "s.csv").values[150:203].T
    m = evaluate(preds, truth)
    np.testing.assert_allclose(printed, [m["l2_norm"], m["rmse"], m["mae"]], atol=5e-5)
    trace = np.loadtxt(tmp_path / "t.csv", delimiter=",", skiprows=1)
    assert trace.shape == (53, 3)
    np.testing.assert_array_equal(trace[:, 2], preds[3])


def test_forecast_perfect_model(tmp_path, capsys):
    # y_t = 0.5 y_{t-1}, written with a zero-mean model
    y = 0.5 ** np.arange(40.0)[:, None] * np.array([[1.0, -2.0]])
    np.savetxt(tmp_path / "y.csv", y, delimiter=",", header="a,b", comments="", fmt="%.17g")
    doc = {"format_version": 1, "kind": "ols", "n": 2, "p": 1, "centered_means": [0.0, 0.0],
           "arrays": {"w": {"dims": [2, 2], "data": [0.5, 0.0, 0.0, 0.5]}}, "training": {}}
    (tmp_path / "m.json").write_text(json.dumps(doc))
    assert run("forecast", "--model", tmp_path / "m.json", "--input", tmp_path / "y.csv",
               "--train-len", 20, "--test-len", 20) == 0
    assert capsys.readouterr().out.splitlines()[1].split() == ["0.0000"] * 3


def test_forecast_errors(sim25, tmp_path):
    assert run("fit", "--method", "ols", "--lags", 3, "--input", sim25 / "s.csv",
               "--model-out", tmp_path / "m.json") == 0
    assert run("forecast", "--model", tmp_path / "m.json", "--input", sim25 / "s.csv",
               "--train-len", 150, "--test-len", 60) == 2
    small = tmp_path / "small.csv"
    run("simulate", "--n", 4, "--p", 3, "--ranks", "2,2,2", "--t", 50, "--out", small)
    assert run("forecast", "--model", tmp_path / "m.json", "--input", small,
               "--train-len", 10, "--test-len", 5) == 2


def test_fit_malformed_csv(tmp_path):
    (tmp_path / "bad.csv").write_text("a,b\n1,2\nx,3\n")
    assert run("fit", "--method", "ols", "--lags", 1, "--input", tmp_path / "bad.csv",
               "--model-out", tmp_path / "m.json") == 2


def test_fit_nonfinite_loss_exit_3(sim25, tmp_path):
    assert run("fit", "--method", "lr", "--r", 2, "--lags", 3, "--input", sim25 / "s.csv",
               "--model-out", tmp_path / "m.json", "--learning-rate", 50) == 3


def test_transform(tmp_path):
    (tmp_path / "raw.csv").write_text("a,b\n1,2\n1,5\n2,3\n4,9\n3,1\n")
    out = tmp_path / "t.csv"
    assert run("transform", "--input", tmp_path / "raw.csv", "--output", out, "--codes", "1,3") == 0
    s = read_series_csv(out)
    np.testing.assert_array_equal(s.values, [[2, -5], [4, 8], [3, -14]])
    (tmp_path / "raw2.csv").write_text("a\n1\n0\n")
    assert run("transform", "--input", tmp_path / "raw2.csv", "--output", out, "--codes", "5") == 2


def test_usage_errors(tmp_path):
    with pytest.raises(SystemExit) as e:
        run("fit", "--bogus")
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        run("frobnicate")
    assert e.value.code == 1
    assert run("experiment", "--kind", "macro", "--config", tmp_path / "missing.ini") == 1


@pytest.mark.parametrize("cmd", ["simulate", "fit", "forecast", "transform", "experiment", "inspect"])
def test_help_documents_every_flag(cmd, capsys):
    with pytest.raises(SystemExit) as e:
        run(cmd, "--help")
    assert e.value.code == 0
    text = capsys.readouterr().out
    sub = build_parser()._subparsers._group_actions[0].choices[cmd]
    for action in sub._actions:
        for opt in action.option_strings:
            assert opt in text
        if action.option_strings and action.dest != "help":
            assert action.help


def test_experiment_tiny_grid(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[grid]\nn = 9\np = 3\nranks = 2,2,2\nratios = 0.25\nreplications = 3\n"
                   "[training]\nmax_epochs = 2000\n[output]\nworkers = 1\n")
    for name in ("a", "b"):
        assert run("experiment", "--kind", "sample-complexity", "--config", cfg,
                   "--out-dir", tmp_path / name) == 0
    out = capsys.readouterr().out
    assert "ltr" in out and "error_mean" in out
    rec = (tmp_path / "a" / "sample-complexity_seed0_records.csv").read_text().splitlines()
    assert len(rec) == 1 + 9
    for f in ("records.csv", "aggregate.json", "plot.csv"):
        name = f"sample-complexity_seed0_{f}"
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_experiment_flag_overrides_config(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[grid]\nn = 4\np = 2\nranks = 2,2,1\nratios = 0.3\nreplications = 5\nmaster_seed = 1\n"
                   "[training]\nmax_epochs = 100\n")
    assert run("experiment", "--kind", "sample-complexity", "--config", cfg, "--out-dir", tmp_path,
               "--replications", 2, "--master-seed", 9, "--set", "estimators=ols", "--workers", 1) == 0
    rec = (tmp_path / "sample-complexity_seed9_records.csv").read_text().splitlines()
    assert len(rec) == 1 + 2
