import csv
import json
import subprocess
import sys

import numpy as np
import pytest

import dyngp
import dyngp.cli as cli
from dyngp.design import latin_hypercube, simulator_forrester_unit
from dyngp.io import Dataset, save_dataset
from dyngp.kernel import SingularCorrelationError


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    X = latin_hypercube(30, 3, seed=2)
    tp = np.linspace(0, 1, 12)
    Y = np.column_stack([simulator_forrester_unit(x, tp) for x in X])
    save_dataset(Dataset(X, Y, ("a", "b", "c"), tuple(str(2000 + i) for i in range(12))),
                 d / "design.csv", d / "resp.csv")
    np.savetxt(d / "queries.csv", latin_hypercube(4, 3, seed=5), delimiter=",", header="a,b,c", comments="")
    np.savetxt(d / "scalar.csv", Y[5], header="y", comments="")
    return d


def run(*argv):
    return cli.main([str(a) for a in argv])


def _err_line(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    return err[0]


def test_fit_svdgp_then_predict_matches_inline_fit(files, tmp_path):
    assert run("fit-svdgp", "--design", files / "design.csv", "--responses", files / "resp.csv",
               "--out-dir", tmp_path / "fit") == 0
    for name in ("model.json", "summary.json", "manifest.json"):
        assert (tmp_path / "fit" / name).is_file()
    summary = json.loads((tmp_path / "fit" / "summary.json").read_text())
    assert summary["p"] >= 1 and summary["sigma2_hat"] > 0 and "fit_seconds" in summary

    assert run("predict", "--model", tmp_path / "fit" / "model.json", "--queries", files / "queries.csv",
               "--out-dir", tmp_path / "p1") == 0
    assert run("predict", "--design", files / "design.csv", "--responses", files / "resp.csv",
               "--queries", files / "queries.csv", "--out-dir", tmp_path / "p2") == 0
    a = (tmp_path / "p1" / "report.csv").read_bytes()
    assert a == (tmp_path / "p2" / "report.csv").read_bytes()
    rows = list(csv.DictReader((tmp_path / "p1" / "report.csv").open()))
    assert len(rows) == 4 * 12
    assert [r["t"] for r in rows[:12]] == [str(2000 + i) for i in range(12)]


def test_manifest_contents(files, tmp_path, monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "3")
    assert run("fit-svdgp", "--design", files / "design.csv", "--responses", files / "resp.csv",
               "--out-dir", tmp_path, "--seed", 9) == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["version"] == dyngp.__version__
    assert man["seed"] == 9
    assert man["config"]["threads"] == 3
    assert man["config"]["gamma"] == 0.95 and man["config"]["nstarts"] == 5
    assert man["command"] == "fit-svdgp"


def test_local_modes_json(files, tmp_path):
    assert run("predict", "--design", files / "design.csv", "--responses", files / "resp.csv",
               "--queries", files / "queries.csv", "--mode", "lasvd", "--nn", 12, "--n0", 6,
               "--format", "json", "--out-dir", tmp_path) == 0
    doc = json.loads((tmp_path / "report.json").read_text())
    assert len(doc["queries"]) == 4
    for q in doc["queries"]:
        assert len(q["neighborhood"]) == 12
        assert q["error"] is None
        assert min(q["variance"]) >= q["metadata"]["sigma2_hat"]
        np.testing.assert_allclose(np.array(q["hi"]) - q["mean"], 2 * np.sqrt(q["variance"]), rtol=1e-12)


def test_scalar_gp_round_trip(files, tmp_path):
    assert run("fit-gp", "--design", files / "design.csv", "--responses", files / "scalar.csv",
               "--out-dir", tmp_path / "g") == 0
    summary = json.loads((tmp_path / "g" / "summary.json").read_text())
    assert len(summary["theta"]) == 3
    assert run("predict", "--model", tmp_path / "g" / "model.json", "--queries", files / "queries.csv",
               "--out-dir", tmp_path / "p") == 0
    rows = list(csv.DictReader((tmp_path / "p" / "report.csv").open()))
    assert len(rows) == 4


def test_missing_model_is_input_error_without_outputs(files, tmp_path, capsys):
    out = tmp_path / "never"
    assert run("predict", "--model", tmp_path / "nope.json", "--queries", files / "queries.csv",
               "--out-dir", out) == cli.EXIT_INPUT
    assert _err_line(capsys).startswith("error: input-data:")
    assert not out.exists()


def test_malformed_model_file(files, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("predict", "--model", bad, "--queries", files / "queries.csv", "--out-dir", tmp_path / "o") == 3
    assert "input-data" in _err_line(capsys)


def test_usage_errors(files, tmp_path, capsys):
    assert run("bogus") == cli.EXIT_USAGE
    assert _err_line(capsys).startswith("error: usage:")
    assert run("predict", "--queries", files / "queries.csv", "--out-dir", tmp_path) == 2
    capsys.readouterr()
    assert run("fit-svdgp", "--design", "x", "--responses", "y", "--out-dir", tmp_path, "--gamma", "1.5") == 2
    capsys.readouterr()
    assert run("benchmark", "example1", "--nn", 5, "--out-dir", tmp_path) == 2
    capsys.readouterr()


def test_bad_thread_env(files, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "many")
    assert run("fit-svdgp", "--design", files / "design.csv", "--responses", files / "resp.csv",
               "--out-dir", tmp_path) == 2
    assert cli.THREADS_ENV in _err_line(capsys)


def test_bad_data_is_input_error(tmp_path, capsys):
    (tmp_path / "d.csv").write_text("0.1\n0.2\n")
    (tmp_path / "r.csv").write_text("1,2\n3,x\n")
    assert run("fit-svdgp", "--design", tmp_path / "d.csv", "--responses", tmp_path / "r.csv",
               "--out-dir", tmp_path / "o") == 3
    line = _err_line(capsys)
    assert "non-numeric" in line and "row 2, column 2" in line
    assert not (tmp_path / "o").exists()


def test_numerical_failure_exit_code(files, tmp_path, capsys, monkeypatch):
    def boom(*args, **kwargs):
        raise SingularCorrelationError("correlation matrix of design (30 points) is not positive definite")

    monkeypatch.setattr(cli, "fit_svdgp", boom)
    assert run("fit-svdgp", "--design", files / "design.csv", "--responses", files / "resp.csv",
               "--out-dir", tmp_path / "o") == cli.EXIT_NUMERICAL
    assert _err_line(capsys).startswith("error: numerical:")


def test_benchmark_example1(tmp_path):
    assert run("benchmark", "example1", "--seed", 1, "--out-dir", tmp_path) == 0
    rows = list(csv.DictReader((tmp_path / "curves.csv").open()))
    assert len(rows) == 100
    assert {"x", "truth", "mean_p195", "mean_p2", "var_mle_p195", "var_cond_p2"} <= set(rows[0])
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert set(metrics["fits"]) == {"1.95", "2"}
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["seed"] == 1


def test_benchmark_example3_small_thread_invariant(tmp_path):
    for threads in (1, 4):
        assert run("benchmark", "example3", "--n-test", 5, "--threads", threads, "--out-dir",
                   tmp_path / str(threads)) == 0
    for name in ("nrmse.csv", "curves.csv", "metrics.json"):
        assert (tmp_path / "1" / name).read_bytes() == (tmp_path / "4" / name).read_bytes()
    man = json.loads((tmp_path / "1" / "manifest.json").read_text())
    assert man["seed"] == 1234568
    assert len(list(csv.DictReader((tmp_path / "1" / "nrmse.csv").open()))) == 5


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "dyngp", "--version"], capture_output=True, text=True)
    assert out.returncode == 0
    assert dyngp.__version__ in out.stdout
