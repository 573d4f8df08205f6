from __future__ import annotations

import csv
import subprocess
import sys

import numpy as np
import pytest

from manifold_track import cli


def read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_simulate_static_rows_constant(tmp_path):
    assert run("simulate", "--scenario", "static", "--out", tmp_path) == 0
    rows = read(tmp_path / "trial_0000" / "truth.csv")
    assert len(rows) > 1
    assert all({k: v for k, v in r.items() if k != "t"} == {k: v for k, v in rows[0].items() if k != "t"}
               for r in rows)
    assert (tmp_path / "beacons.csv").exists() and (tmp_path / "seeds.csv").exists()


def test_simulate_upath_row_count_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run("simulate", "--scenario", "upath", "--trials", 2, "--seed", 7, "--out", out) == 0
    assert len(read(a / "trial_0000" / "truth.csv")) == 101
    for name in ("truth.csv", "imu.csv", "ranges.csv", "multilateration.csv"):
        for trial in ("trial_0000", "trial_0001"):
            assert (a / trial / name).read_bytes() == (b / trial / name).read_bytes()
    assert (a / "trial_0000" / "imu.csv").read_bytes() != (a / "trial_0001" / "imu.csv").read_bytes()
    assert [r["seed"] for r in read(a / "seeds.csv")] == ["7", "8"]


def test_run_writes_outputs_and_is_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run("run", "--scenario", "upath", "--filters", "EKF,EKFRie", "--trials", 1,
                   "--seed", 3, "--out", out) == 0
    assert (a / "summary.csv").read_bytes() == (b / "summary.csv").read_bytes()
    rows = read(a / "summary.csv")
    assert list(rows[0]) == cli.SUMMARY_COLUMNS
    assert [r["filter"] for r in rows] == ["EKF", "EKFRie"]
    assert all(r["trials"] == "1" and r["seed_base"] == "3" for r in rows)
    est = read(a / "base" / "EKFRie" / "estimates.csv")
    err = read(a / "base" / "EKFRie" / "errors.csv")
    assert len(est) == 101 and len(err) == 100
    cdf = read(a / "cdf.csv")
    assert list(cdf[0]) == cli.CDF_COLUMNS
    fr = [float(r["fraction"]) for r in cdf if r["filter"] == "EKF"]
    assert np.all(np.diff(fr) >= 0) and fr[-1] == 1.0


def test_sigma_sweep_in_db(tmp_path):
    assert run("run", "--scenario", "upath", "--filters", "EKFRie", "--trials", 1,
               "--sweep-sigma", "0db,10db,20db,30db", "--out", tmp_path) == 0
    rows = read(tmp_path / "summary.csv")
    assert len(rows) == 4
    assert [float(r["sigma_r"]) for r in rows] == pytest.approx([1.0, 10**-0.5, 0.1, 10**-1.5])
    assert run("plotdata", tmp_path / "summary.csv", "--out", tmp_path / "plot") == 0
    plot = read(tmp_path / "plot" / "plotdata.csv")
    assert list(plot[0]) == cli.PLOT_COLUMNS
    assert [float(r["x"]) for r in plot] == pytest.approx([0.0, 10.0, 20.0, 30.0])


def test_imu_rate_sweep(tmp_path):
    assert run("run", "--scenario", "upath", "--filters", "EKF", "--trials", 1,
               "--sweep-imu-rate", "4,10", "--out", tmp_path) == 0
    rows = read(tmp_path / "summary.csv")
    assert [r["sweep"] for r in rows] == ["imu_rate", "imu_rate"]
    assert (tmp_path / "imu_rate-4" / "EKF" / "errors.csv").exists()


def _summary(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cli.SUMMARY_COLUMNS)
        for scen, filt, sweep, sigma, rate in rows:
            w.writerow([scen, filt, sweep, 0, sigma, rate, 1, 0, 0.1, 0.0, 1.0, 0.0, 0.2, 0.2])


def test_plotdata_single_row_and_db(tmp_path):
    _summary(tmp_path / "s.csv", [("upath", "EKF", "sigma_r", 0.1, 10)])
    assert run("plotdata", tmp_path / "s.csv", "--out", tmp_path) == 0
    plot = read(tmp_path / "plotdata.csv")
    assert len(plot) == 1
    assert plot[0]["axis"] == "inv_sigma_db" and float(plot[0]["x"]) == pytest.approx(20.0)


def test_plotdata_sorted_by_series_then_x(tmp_path):
    _summary(tmp_path / "s.csv", [
        ("upath", "UKF", "sigma_r", 0.01, 10),
        ("upath", "EKF", "sigma_r", 0.01, 10),
        ("upath", "EKF", "sigma_r", 1.0, 10),
        ("upath", "EKF", "sigma_r", 0.1, 10),
    ])
    assert run("plotdata", tmp_path / "s.csv", "--out", tmp_path) == 0
    plot = read(tmp_path / "plotdata.csv")
    assert [(r["series"], float(r["x"])) for r in plot] == [
        ("EKF", 0.0), ("EKF", 20.0), ("EKF", 40.0), ("UKF", 40.0)]


def test_plotdata_round_trips_own_output(tmp_path):
    assert run("run", "--scenario", "static", "--filters", "UKF", "--trials", 1, "--out", tmp_path) == 0
    recs = cli.read_summary(tmp_path / "summary.csv")
    assert len(recs) == 1 and recs[0]["filter"] == "UKF"


def test_malformed_summary_reports_line(tmp_path, capsys):
    _summary(tmp_path / "s.csv", [("upath", "EKF", "sigma_r", 0.1, 10)])
    text = (tmp_path / "s.csv").read_text() + "upath,EKF,sigma_r,0,abc,10,1,0,0.1,0,1,0,0.2,0.2\n"
    (tmp_path / "s.csv").write_text(text)
    assert run("plotdata", tmp_path / "s.csv", "--out", tmp_path) == 1
    assert "s.csv:3" in capsys.readouterr().err
    with pytest.raises(cli.SummaryParseError, match=":1:"):
        (tmp_path / "h.csv").write_text("a,b\n")
        cli.read_summary(tmp_path / "h.csv")


@pytest.mark.parametrize("argv", [
    [],
    ["fly"],
    ["run", "--scenario", "upath"],
    ["run", "--scenario", "upath", "--out", "x", "--filters", "PF"],
    ["run", "--scenario", "upath", "--out", "x", "--trials", "0"],
    ["run", "--scenario", "upath", "--out", "x", "--sweep-sigma", "0.1", "--sweep-imu-rate", "10"],
    ["run", "--scenario", "upath", "--out", "x", "--sweep-sigma", "-1"],
    ["run", "--scenario", "upath", "--out", "x", "--sweep-imu-rate", "2.5"],
    ["simulate", "--scenario", "no-such-scenario", "--out", "x"],
])
def test_usage_errors_exit_2(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert cli.main(argv) == 2


def test_runtime_errors_exit_1(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert run("simulate", "--scenario", "static", "--out", blocker / "sub") == 1
    assert run("plotdata", tmp_path / "missing.csv", "--out", tmp_path) == 1
    bad = tmp_path / "bad.ini"
    bad.write_text("[path]\nkind = upath\nduration = 5\nwaypoints = 0,0,0; 1,1,0\n[rates]\nimu_rate = -4\n")
    assert run("run", "--scenario", bad, "--out", tmp_path / "o", "--trials", 1) == 1


def test_thread_env(tmp_path, monkeypatch):
    monkeypatch.setenv("MANIFOLD_TRACK_THREADS", "zero")
    assert run("run", "--scenario", "static", "--trials", 1, "--out", tmp_path) == 2
    monkeypatch.setenv("MANIFOLD_TRACK_THREADS", "0")
    assert run("run", "--scenario", "static", "--trials", 1, "--out", tmp_path) == 2
    monkeypatch.setenv("MANIFOLD_TRACK_THREADS", "2")
    assert run("run", "--scenario", "static", "--filters", "EKF", "--trials", 2, "--out", tmp_path / "t2") == 0
    monkeypatch.setenv("MANIFOLD_TRACK_THREADS", "1")
    assert run("run", "--scenario", "static", "--filters", "EKF", "--trials", 2, "--out", tmp_path / "t1") == 0
    assert (tmp_path / "t1" / "summary.csv").read_bytes() == (tmp_path / "t2" / "summary.csv").read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "manifold_track.cli", "run", "--scenario", "upath",
                           "--filters", "XX", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 2 and "usage error" in proc.stderr
