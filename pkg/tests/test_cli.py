import json
import subprocess
import sys

import pytest

from eastkcm import cli


def run(tmp_path, *argv):
    return cli.main([*argv, "--out", str(tmp_path), "--no-plot", "--jobs", "1"])


def test_front_outputs_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["front", "--p", "0.25", "--horizon", "300", "--replicas", "20", "--seed", "7"]
    assert run(a, *args) == 0
    assert run(b, *args) == 0
    assert (a / "front_trace.csv").read_bytes() == (b / "front_trace.csv").read_bytes()
    rep = json.loads((a / "front_report.json").read_text())
    assert "velocity" in rep and "sigma_star_sq" in rep and "clt" in rep
    man = json.loads((a / "manifest.json").read_text())
    assert man["command"] == "front" and man["config"]["seed"] == 7


def test_front_parallel_matches_serial(tmp_path):
    args = ["front", "--p", "0.3", "--horizon", "100", "--replicas", "6", "--seed", "1", "--no-plot"]
    assert cli.main([*args, "--out", str(tmp_path / "s"), "--jobs", "1"]) == 0
    assert cli.main([*args, "--out", str(tmp_path / "m"), "--jobs", "2"]) == 0
    assert (tmp_path / "s" / "front_trace.csv").read_bytes() == (tmp_path / "m" / "front_trace.csv").read_bytes()


def test_front_rejects_bad_p(tmp_path):
    assert run(tmp_path, "front", "--p", "1.5") == 2


def test_argparse_usage_exit_code(tmp_path):
    with pytest.raises(SystemExit) as e:
        cli.main(["front"])
    assert e.value.code == 2


def test_plot_written(tmp_path):
    assert cli.main(["front", "--p", "0.25", "--horizon", "50", "--replicas", "3",
                     "--out", str(tmp_path), "--jobs", "1"]) == 0
    svg = (tmp_path / "front_trajectory.svg").read_text()
    assert svg.lstrip().startswith("<?xml") and "<svg" in svg


def test_nu_single_replica_and_window(tmp_path):
    assert run(tmp_path, "nu", "--p", "0.3", "--w", "600") == 2
    assert run(tmp_path, "nu", "--p", "0.3", "--w", "5", "--replicas", "1",
               "--horizon", "50", "--pool-from", "10", "--snapshots", "5") == 0
    lines = (tmp_path / "nu.csv").read_text().splitlines()
    assert lines[0] == "p,offset,freq,ci_lo,ci_hi" and len(lines) == 6


def test_cutoff_small_l_routes_to_exact(tmp_path):
    with pytest.warns(UserWarning):
        assert run(tmp_path, "cutoff", "--p", "0.3", "--L", "5") == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["route"] == "exact"
    assert (tmp_path / "cutoff_exact.csv").exists()


def test_cutoff_monte_carlo_computes_v(tmp_path):
    assert run(tmp_path, "cutoff", "--p", "0.3", "--L", "100", "--replicas", "200",
               "--calib-replicas", "20", "--calib-horizon", "300", "--s=-1,0,1") == 0
    rep = json.loads((tmp_path / "cutoff_report.json").read_text())
    assert rep["calibration"] is not None and rep["v"] > 0


def test_exact_table_and_reject(tmp_path):
    assert run(tmp_path, "exact", "--p", "0.5", "--L-max", "6", "--tmix-max", "3", "--dump-coo", "2") == 0
    rows = (tmp_path / "gap_table.csv").read_text().splitlines()
    assert len(rows) == 7
    l1 = json.loads((tmp_path / "l1_check.json").read_text())
    assert abs(l1["gap"] - 1) < 1e-10 and l1["tv_max_abs_err"] < 1e-10
    assert abs(l1["t_mix"] - l1["t_mix_expected"]) < 1e-10
    assert run(tmp_path, "exact", "--L-max", "30") == 3


def test_tree_commands(tmp_path):
    assert run(tmp_path, "tree", "--k", "5", "--j", "3") == 2
    assert run(tmp_path, "tree", "--k", "2", "--j", "2", "--L", "1-3", "--replicas", "200",
               "--dekking-host", "2", "--pc-grid", "2,3,4") == 0
    grid = json.loads((tmp_path / "pc_grid.json").read_text())
    for row in grid:
        want = 1.0 if row["j"] == 1 else 1 / row["k"]
        assert abs(row["p_c"] - want) < 1e-9
    assert json.loads((tmp_path / "dekking_host.json").read_text())["passed"] in (True, False)
    assert (tmp_path / "tree_scan.csv").read_text().startswith("L,t_hit")


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert cli.main(["exact", "--L-max", "2", "--tmix-max", "1", "--no-plot"]) == 0
    assert (tmp_path / "env" / "manifest.json").exists()


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "eastkcm.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "eastkcm" in out.stdout
