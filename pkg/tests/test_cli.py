import json
import subprocess
import sys

import numpy as np
import pytest

from effnoise.cli import main
from effnoise.data_model import Dataset, write_csv
from effnoise.effective_noise import EffectiveNoiseEstimate


@pytest.fixture
def csv_file(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.standard_normal((60, 12))
    d = Dataset(X, X[:, :2].sum(axis=1) + rng.standard_normal(60))
    path = tmp_path / "d.csv"
    write_csv(d, path)
    return path


def _run(args, tmp_path):
    return main([*args, "--out", str(tmp_path / "out")])


def test_estimate_writes_json(csv_file, tmp_path):
    args = ["estimate", "--data", str(csv_file), "--response", "y", "--alpha", "0.05",
            "--L", "100", "--M", "100", "--seed", "7"]
    assert _run(args, tmp_path) == 0
    body = json.loads((tmp_path / "out" / "estimate.json").read_text())
    assert body["schema_version"] and body["settings"] == {"L": 100, "M": 100, "seed": 7}
    est = EffectiveNoiseEstimate.from_dict(body)
    assert est.lambda_hat == body["lambda_hat"] > 0
    assert "tol_kkt" in body["solver"]


def test_outputs_are_byte_identical_across_runs(csv_file, tmp_path):
    args = ["test", "--data", str(csv_file), "--seed", "3", "--L", "40", "--M", "30"]
    main([*args, "--out", str(tmp_path / "a")])
    main([*args, "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "test.json").read_bytes() == (tmp_path / "b" / "test.json").read_bytes()


def test_test_partial_by_index_and_name(csv_file, tmp_path):
    assert _run(["test-partial", "--data", str(csv_file), "--response", "y", "--set-a", "1,2,3",
                 "--alpha", "0.05", "--seed", "7"], tmp_path) == 0
    by_index = json.loads((tmp_path / "out" / "test.json").read_text())
    assert by_index["test"] == "partial" and by_index["A"] == [0, 1, 2]
    assert _run(["test-partial", "--data", str(csv_file), "--set-a", "x1,x2,x3", "--seed", "7"], tmp_path) == 0
    by_name = json.loads((tmp_path / "out" / "test.json").read_text())
    assert by_name["statistic"] == by_index["statistic"]


def test_calibrate_writes_bounds(csv_file, tmp_path):
    assert _run(["calibrate", "--data", str(csv_file), "--delta", "0.1", "--phi", "1",
                 "--L", "30", "--M", "30"], tmp_path) == 0
    body = json.loads((tmp_path / "out" / "calibration.json").read_text())
    assert body["ell_infty_bound"] == pytest.approx(2 * 1.1 * body["lambda_hat"])
    assert len(body["beta_hat"]) == len(body["columns"]) == 12


def test_response_by_index_and_no_header(tmp_path):
    path = tmp_path / "raw.csv"
    rng = np.random.default_rng(1)
    np.savetxt(path, rng.standard_normal((30, 4)), delimiter=",")
    assert _run(["estimate", "--data", str(path), "--no-header", "--response", "2",
                 "--L", "20", "--M", "20"], tmp_path) == 0
    assert _run(["estimate", "--data", str(path), "--no-header", "--response", "y"], tmp_path) == 1


@pytest.mark.parametrize(
    "argv",
    [
        ["estimate", "--data", "d.csv", "--bogus"],
        ["estimate", "--data", "d.csv", "--alph", "0.1"],
        ["estimate", "--data", "d.csv", "--alpha", "1.5"],
        ["estimate"],
        ["frobnicate"],
        [],
    ],
)
def test_usage_errors_exit_one(argv, capsys):
    with pytest.raises(SystemExit) as err:
        main(argv)
    assert err.value.code == 1
    assert "error" in capsys.readouterr().err


def test_bad_input_exits_one(csv_file, tmp_path, capsys):
    assert _run(["estimate", "--data", str(tmp_path / "nope.csv")], tmp_path) == 1
    bad = tmp_path / "bad.csv"
    bad.write_text("y,a\n1,abc\n")
    assert _run(["estimate", "--data", str(bad)], tmp_path) == 1
    assert "row 2" in capsys.readouterr().err
    assert _run(["test-partial", "--data", str(csv_file), "--set-a", "zz"], tmp_path) == 1


def test_numeric_failure_exits_two(tmp_path, capsys):
    rng = np.random.default_rng(2)
    X = rng.standard_normal((30, 5))
    X[:, 1] = 2 * X[:, 0]
    path = tmp_path / "dep.csv"
    write_csv(Dataset(X, rng.standard_normal(30)), path)
    assert _run(["test-partial", "--data", str(path), "--set-a", "1,2"], tmp_path) == 2
    assert "rank deficient" in capsys.readouterr().err


def test_simulate_writes_reports_independent_of_threads(tmp_path):
    cfg = {"n": 40, "p": 30, "N_runs": 3, "L": 20, "M": 20, "oracle_draws": 100,
           "cv_folds": 4, "seed": 5, "hist_bins": 8}
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(cfg))
    outs = []
    for threads in ("1", "3"):
        out = tmp_path / f"res{threads}"
        assert main(["simulate", "--config", str(path), "--out", str(out), "--threads", threads]) == 0
        outs.append(out)
    for name in ("losses.csv", "tests.csv", "summary.json", "hist_lambda.svg", "hist_lambda.csv",
                 "hist_hamming.csv", "size_power.txt"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    summary = json.loads((outs[0] / "summary.json").read_text())
    assert summary["schema_version"] and summary["calibration"]["included_runs"] == 3
    assert len((outs[0] / "losses.csv").read_text().splitlines()) == 1 + 3 * 3


def test_simulate_rejects_bad_config(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"n": 40, "colour": "red"}')
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path)]) == 1


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "effnoise", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "effnoise" in res.stdout
