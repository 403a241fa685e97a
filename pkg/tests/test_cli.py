import json
import subprocess
import sys
from pathlib import Path

import pytest

from hybrid_fo.cli import EXIT_ERROR, EXIT_OK, EXIT_VIOLATION, main
from hybrid_fo.hybrid import CSV_HEADER

REFERENCE_TABLE = Path(__file__).resolve().parents[1] / "data" / "reference_sweep.csv"


def test_synthesize_gains_prints_closed_loop(capsys):
    assert main(["synthesize-gains"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "K =" in out and "A_stab =" in out and "placement ok: True" in out
    assert "-0.0155" in out and "-0.017" in out


def test_simulate_to_csv(tmp_path):
    path = tmp_path / "traj.csv"
    assert main(["simulate", "--horizon", "20", "--out", str(path)]) == EXIT_OK
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert any(line.split(",")[2] == "ii" for line in lines[1:])


def test_simulate_to_directory(tmp_path):
    assert main(["simulate", "--horizon", "20", "--out", str(tmp_path / "run")]) == EXIT_OK
    assert (tmp_path / "run" / "trajectory.csv").exists()
    assert (tmp_path / "run" / "bound_report.csv").read_text().startswith("t,err,prop_bound,thm_bound,margin")


def _write_cfg(tmp_path, body):
    p = tmp_path / "run.cfg"
    p.write_text(body)
    return p


def test_bounds_exit_codes(tmp_path, capsys):
    # A valid heavy-chaser run sits inside the envelope; the reference scenario does not.
    good = _write_cfg(tmp_path, "m_c = 6000\nstrict_stepsize = true\n")
    traj = tmp_path / "good.csv"
    assert main(["simulate", "--config", str(good), "--horizon", "60", "--out", str(traj)]) == EXIT_OK
    assert main(["bounds", "--config", str(good), "--traj", str(traj)]) == EXIT_OK
    bad = tmp_path / "bad.csv"
    assert main(["simulate", "--horizon", "60", "--out", str(bad)]) == EXIT_OK
    capsys.readouterr()
    assert main(["bounds", "--traj", str(bad), "--out", str(tmp_path / "rep.csv")]) == EXIT_VIOLATION
    assert "warning: stepsize hypothesis fails" in capsys.readouterr().out
    assert (tmp_path / "rep.csv").exists()


def test_usage_errors_exit_2(tmp_path):
    assert main(["frobnicate"]) == EXIT_ERROR
    assert main(["simulate", "--config", str(tmp_path / "missing.cfg")]) == EXIT_ERROR
    assert main(["simulate", "--config", str(_write_cfg(tmp_path, "nope = 1\n"))]) == EXIT_ERROR
    assert main(["bounds"]) == EXIT_ERROR


def test_fit_regression_from_table(capsys):
    assert main(["fit-regression", "--table", str(REFERENCE_TABLE)]) == EXIT_OK
    res = json.loads(capsys.readouterr().out)
    assert list(res["coefficients"]) == ["1", "kappa", "theta", "kappa^2", "theta^2", "kappa*theta"]
    assert 0 < res["r2"] < 1


def test_sweep_and_batch_write_outputs(tmp_path):
    cfg = _write_cfg(tmp_path, "strict_stepsize = false\ntheta_grid = [-0.25, 0.5, 1.0]\n"
                               "kappa_grid = [0.1, 0.9]\nhorizon = 30\nwindow = 10\n")
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "sw")]) == EXIT_OK
    for name in ("sweep.csv", "sweep_table.csv", "rho_aggregate.csv", "sweep_summary.json"):
        assert (tmp_path / "sw" / name).exists()
    assert main(["batch-ic", "--config", str(cfg), "--n", "2", "--out", str(tmp_path / "b")]) == EXIT_OK
    assert len((tmp_path / "b" / "batch_ic.csv").read_text().splitlines()) == 3


@pytest.mark.slow
def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "hybrid_fo", "synthesize-gains"], capture_output=True, text=True)
    assert proc.returncode == 0 and "placement ok: True" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "hybrid_fo", "nonsense"], capture_output=True, text=True)
    assert proc.returncode == 2
