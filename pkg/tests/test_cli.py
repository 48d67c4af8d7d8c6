import json
import shutil
import subprocess
import sys

import pytest

from unbalanced_em import Dataset
from unbalanced_em.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_sample_writes_csv_and_is_deterministic(tmp_path, capsys):
    args = ["sample", "--d", "4", "--n", "1000", "--eta", "1", "--rho", "0.6", "--seed", "7"]
    assert run(capsys, *args, "--out", str(tmp_path / "a.csv"))[0] == 0
    assert run(capsys, *args, "--out", str(tmp_path / "b.csv"))[0] == 0
    a = (tmp_path / "a.csv").read_bytes()
    assert a == (tmp_path / "b.csv").read_bytes()
    assert len(a.splitlines()) == 1001
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert Dataset.from_csv(tmp_path / "a.csv").n == 1000


def test_sample_rejects_rho_one(capsys):
    code, _, err = run(capsys, "sample", "--n", "10", "--eta", "1", "--rho", "1.0")
    assert code == 2 and "domain error" in err


def test_estimate_adaptive_has_branch(capsys):
    code, out, _ = run(capsys, "estimate", "--estimator", "em-adaptive", "--d", "2",
                       "--n", "2000", "--eta", "1", "--rho", "0.6")
    rec = json.loads(out)
    assert code == 0 and rec["branch"] == "unbalanced" and rec["schema_version"] == 1
    assert {"value", "loss_l2", "loss_l0", "iterations_used", "converged"} <= set(rec)


def test_estimate_spectral_omits_l2(capsys):
    code, out, _ = run(capsys, "estimate", "--estimator", "spectral", "--d", "2",
                       "--n", "2000", "--eta", "1", "--rho", "0.6")
    rec = json.loads(out)
    assert code == 0 and "loss_l2" not in rec and rec["loss_l0"] >= 0


def test_estimate_unidentifiable_and_unknown(capsys):
    code, _, err = run(capsys, "estimate", "--estimator", "mom-mean", "--n", "100",
                       "--eta", "1", "--rho", "0")
    assert code == 2 and "unidentifiable" in err
    code, _, err = run(capsys, "estimate", "--estimator", "nope", "--n", "100",
                       "--eta", "1", "--rho", "0.3")
    assert code == 2 and "unknown estimator" in err
    assert run(capsys, "estimate", "--estimator", "em-mean")[0] == 2


def test_estimate_from_file_with_trace(tmp_path, capsys):
    data = tmp_path / "d.csv"
    run(capsys, "sample", "--d", "2", "--n", "500", "--eta", "1", "--rho", "0.4",
        "--out", str(data))
    code, _, _ = run(capsys, "estimate", "--estimator", "em-mean", "--data", str(data),
                     "--out", str(tmp_path / "e.json"), "--trace", str(tmp_path / "t.csv"))
    assert code == 0
    rec = json.loads((tmp_path / "e.json").read_text())
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,state0,state1,residual"
    assert len(lines) == rec["iterations_used"] + 2
    assert rec["rho_star"] == 0.4


def test_population_fixed_points(capsys):
    code, out, _ = run(capsys, "population", "fixed-points", "--delta", "0.3", "--eta", "1")
    rec = json.loads(out)
    assert code == 0 and rec["positive"] == [pytest.approx(1.0, abs=1e-6)]
    assert all(-1 < r < 0 for r in rec["negative"])


def test_population_weight_fixed_point(capsys):
    code, out, _ = run(capsys, "population", "weight-fixed-point", "--theta-scale", "1.5",
                       "--eta", "1", "--rho", "0.6")
    rec = json.loads(out)
    assert code == 0 and rec["fixed_point"] < 0.6


def test_population_landscape(capsys):
    code, out, _ = run(capsys, "population", "landscape", "--delta-grid", "0.05,0.5",
                       "--eta-grid", "1")
    lines = out.splitlines()
    assert code == 0 and lines[0] == "delta,eta,count,roots"
    assert [line.split(",")[2] for line in lines[1:]] == ["0", "1"]


def test_sweep_outputs_and_reproducibility(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"d": [2], "n": [400, 1600], "eta": [1.0], "rho_star": [0.6],
                                "trials": 4, "estimators": ["em-mean", "spectral"]}))
    for name in ("o1", "o2"):
        code, _, _ = run(capsys, "sweep", str(spec), "--output-dir", str(tmp_path / name),
                         "--trials", "1", "--base-seed", "7")
        assert code == 0
    for f in ("sweep.csv", "summary.json"):
        assert (tmp_path / "o1" / f).read_bytes() == (tmp_path / "o2" / f).read_bytes()
    summary = json.loads((tmp_path / "o1" / "summary.json").read_text())
    assert "slope_log_error_vs_log_n" in summary["slopes"][0]
    assert summary["spec"]["trials"] == 1


def test_sweep_empty_estimators_and_bad_json(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"d": [2], "n": [400], "eta": [1.0], "rho_star": [0.6],
                                "trials": 1, "estimators": []}))
    assert run(capsys, "sweep", str(spec), "--output-dir", str(tmp_path / "o"))[0] == 2
    spec.write_text("{not json")
    assert run(capsys, "sweep", str(spec))[0] == 2


def test_missing_file_is_runtime_error(tmp_path, capsys):
    code, _, err = run(capsys, "estimate", "--estimator", "em-mean",
                       "--data", str(tmp_path / "absent.csv"))
    assert code == 1 and "error" in err


def test_check_command(capsys):
    code, out, _ = run(capsys, "check")
    assert code == 0 and out.count("PASS") == 11


@pytest.mark.skipif(shutil.which("uem") is None, reason="console script not installed")
def test_console_script_exit_code():
    proc = subprocess.run(["uem", "sample", "--n", "5", "--eta", "1", "--rho", "1.0"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    proc = subprocess.run([sys.executable, "-m", "unbalanced_em.cli", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "0.1.0" in proc.stdout
