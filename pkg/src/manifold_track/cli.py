"""Command-line experiment runner.

Subcommands::

    manifold-track simulate --scenario upath --trials 2 --seed 0 --out sim/
    manifold-track run --scenario upath --filters EKF,EKFRie --trials 100 --out res/
    manifold-track run --scenario upath --sweep-sigma 1,0.1,0.01 --out res/
    manifold-track run --scenario upath --sweep-imu-rate 4,10,100 --out res/
    manifold-track plotdata res/summary.csv --out plots/

Exit status is 0 on success, 2 on usage errors and 1 on runtime errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import InvalidArgumentError, NumericalError
from .experiment import monte_carlo, prepare, simulate_trial, thread_cap
from .filters import FilterKind
from .metrics import aggregate_trials
from .scenarios import load_scenario, with_overrides

SUMMARY_COLUMNS = [
    "scenario", "filter", "sweep", "value", "sigma_r", "imu_rate", "trials", "seed_base",
    "rmse_pos_mean", "rmse_pos_std", "rmse_ori_mean", "rmse_ori_std", "p90_pos", "p90_rmse",
]
CDF_COLUMNS = ["scenario", "filter", "sweep", "value", "error_m", "fraction"]
PLOT_COLUMNS = ["series", "scenario", "axis", "x", "rmse_pos", "rmse_pos_std", "rmse_ori", "rmse_ori_std"]
CDF_POINTS = 101


class UsageError(Exception):
    pass


class SummaryParseError(Exception):
    pass


def fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".10g")


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([c if isinstance(c, str) else fmt(c) for c in row])
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(buf.getvalue())
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _parse_list(text, flag):
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            out.append(float(tok))
        except ValueError:
            raise UsageError(f"{flag}: not a number: {tok!r}") from None
    if not out:
        raise UsageError(f"{flag}: empty list")
    return out


def _parse_sigmas(text):
    """Comma list of range-noise levels: metres, or ``<n>db`` meaning ``20 log10(1/sigma)``."""
    out = []
    for tok in text.split(","):
        tok = tok.strip().lower()
        if not tok:
            continue
        try:
            sigma = 10.0 ** (-float(tok[:-2]) / 20.0) if tok.endswith("db") else float(tok)
        except ValueError:
            raise UsageError(f"--sweep-sigma: not a number: {tok!r}") from None
        if not sigma > 0:
            raise UsageError("--sweep-sigma values must be positive")
        out.append(sigma)
    if not out:
        raise UsageError("--sweep-sigma: empty list")
    return out


def _parse_filters(text):
    try:
        kinds = [FilterKind.parse(t) for t in text.split(",") if t.strip()]
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from None
    if not kinds:
        raise UsageError("--filters: empty list")
    return list(dict.fromkeys(kinds))


def _load(args):
    try:
        spec = load_scenario(args.scenario)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None
    if args.seed is not None:
        spec = with_overrides(spec, seed=args.seed)
    return spec


@dataclass(frozen=True)
class SweepPoint:
    axis: str
    value: float
    spec: object

    @property
    def label(self):
        return "base" if self.axis == "none" else f"{self.axis}-{fmt(self.value)}"


def sweep_points(spec, sigmas=None, rates=None):
    if sigmas and rates:
        raise UsageError("--sweep-sigma and --sweep-imu-rate are mutually exclusive")
    if sigmas:
        return [SweepPoint("sigma_r", s, with_overrides(spec, sigma_r=s)) for s in sigmas]
    if rates:
        pts = []
        for r in rates:
            if not r > 0:
                raise UsageError("--sweep-imu-rate values must be positive")
            try:
                s = with_overrides(spec, imu_rate=r)
                s.ms_ratio
            except InvalidArgumentError as exc:
                raise UsageError(f"--sweep-imu-rate {fmt(r)}: {exc}") from None
            pts.append(SweepPoint("imu_rate", r, s))
        return pts
    return [SweepPoint("none", 0.0, spec)]


# -- simulate -----------------------------------------------------------------


def cmd_simulate(args):
    spec = _load(args)
    out = Path(args.out)
    trials = 1 if args.trials is None else args.trials
    setup = prepare(spec)
    tr = setup.truth
    written = []
    truth_rows = [
        [tr.t[k], *tr.p[k], *tr.v[k], *tr.a_world[k], *tr.r[k].reshape(9), *tr.omega[k]]
        for k in range(len(tr))
    ]
    truth_header = (["t", "px", "py", "pz", "vx", "vy", "vz", "ax", "ay", "az"]
                    + [f"r{i}{j}" for i in range(1, 4) for j in range(1, 4)] + ["wx", "wy", "wz"])
    written.append(_write_csv(out / "beacons.csv", ["beacon", "x", "y", "z"],
                              [[j, *b] for j, b in enumerate(setup.beacons.b)]))
    for i in range(trials):
        seed = spec.seed + i
        d = simulate_trial(setup, seed)
        tdir = out / f"trial_{i:04d}"
        written.append(_write_csv(tdir / "truth.csv", truth_header, truth_rows))
        written.append(_write_csv(
            tdir / "imu.csv", ["k", "t", "wx", "wy", "wz", "ax", "ay", "az"],
            [[k, tr.t[k], *d.imu[k]] for k in range(len(d.imu))],
        ))
        rows = []
        for n, step in enumerate(d.ms_steps):
            for j in range(d.ranges.shape[1]):
                rows.append([int(step), tr.t[step], j, *d.ranges[n, j]])
        written.append(_write_csv(tdir / "ranges.csv", ["k", "t", "beacon", "s1", "s2", "s3"], rows))
        written.append(_write_csv(
            tdir / "multilateration.csv",
            ["k", "t", "x1", "y1", "z1", "x2", "y2", "z2", "x3", "y3", "z3", "converged"],
            [[int(s), tr.t[s], *d.y_ms[n], int(d.converged[n])] for n, s in enumerate(d.ms_steps)],
        ))
    _write_csv(out / "seeds.csv", ["trial", "seed"], [[i, spec.seed + i] for i in range(trials)])
    print(f"wrote {len(written) + 1} files under {out}")
    return 0


# -- run ------------------------------------------------------------------------


def _state_header():
    return (["trial", "seed", "k", "t"] + [f"theta{i}" for i in range(1, 10)]
            + ["px", "py", "pz", "vx", "vy", "vz"])


def cmd_run(args):
    spec = _load(args)
    kinds = _parse_filters(args.filters) if args.filters else list(FilterKind)
    trials = 100 if args.trials is None else args.trials
    sigmas = _parse_sigmas(args.sweep_sigma) if args.sweep_sigma else None
    rates = _parse_list(args.sweep_imu_rate, "--sweep-imu-rate") if args.sweep_imu_rate else None
    points = sweep_points(spec, sigmas, rates)
    workers = thread_cap()
    out = Path(args.out)
    seed_base = spec.seed
    name = spec.name or spec.kind.value

    summary, cdf_rows = [], []
    for pt in points:
        res = monte_carlo(pt.spec, kinds, trials, seed_base, workers=workers, keep_x=True)
        t = np.arange(pt.spec.n_steps + 1) * pt.spec.T
        for j, kind in enumerate(kinds):
            est_rows, err_rows = [], []
            for i, trial in enumerate(res):
                r, x = trial[j]
                for k in range(len(x)):
                    est_rows.append([i, r.seed, k, t[k], *x[k]])
                for k in range(len(r.pos_err)):
                    err_rows.append([i, r.seed, k + 1, t[k + 1], r.pos_err[k], r.ori_err[k]])
            fdir = out / pt.label / kind.value
            _write_csv(fdir / "estimates.csv", _state_header(), est_rows)
            _write_csv(fdir / "errors.csv", ["trial", "seed", "k", "t", "pos_err_m", "ori_err_deg"], err_rows)
        results = [r for trial in res for r, _ in trial]
        hi = max(float(np.max(r.pos_err)) for r in results)
        grid = np.linspace(0.0, hi if hi > 0 else 1.0, CDF_POINTS)
        agg = aggregate_trials(results, grid)
        for kind in kinds:
            s = agg[kind.value]
            summary.append([
                name, kind.value, pt.axis, pt.value, pt.spec.sigma_r, pt.spec.imu_rate, s.trials, seed_base,
                s.rmse_pos_mean, s.rmse_pos_std, s.rmse_ori_mean, s.rmse_ori_std, s.p90_pos, s.p90_rmse,
            ])
            for g, f in zip(s.cdf_grid, s.cdf):
                cdf_rows.append([name, kind.value, pt.axis, pt.value, g, f])
    _write_csv(out / "summary.csv", SUMMARY_COLUMNS, summary)
    _write_csv(out / "cdf.csv", CDF_COLUMNS, cdf_rows)
    print(f"wrote {out / 'summary.csv'} ({len(summary)} rows)")
    return 0


# -- plotdata -------------------------------------------------------------------


def read_summary(path):
    """Parse a summary file; errors name the file and line."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != SUMMARY_COLUMNS:
        raise SummaryParseError(f"{path}:1: header does not match {','.join(SUMMARY_COLUMNS)}")
    numeric = set(SUMMARY_COLUMNS[3:])
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(SUMMARY_COLUMNS):
            raise SummaryParseError(f"{path}:{lineno}: expected {len(SUMMARY_COLUMNS)} fields, got {len(row)}")
        rec = dict(zip(SUMMARY_COLUMNS, row))
        for key in numeric:
            try:
                rec[key] = float(rec[key])
            except ValueError:
                raise SummaryParseError(f"{path}:{lineno}: {key} is not a number: {rec[key]!r}") from None
        if rec["sweep"] not in ("none", "sigma_r", "imu_rate"):
            raise SummaryParseError(f"{path}:{lineno}: unknown sweep axis {rec['sweep']!r}")
        out.append(rec)
    return out


def sigma_to_db(sigma):
    return math.inf if sigma == 0 else 20.0 * math.log10(1.0 / sigma)


def plot_rows(records):
    rows = []
    for rec in records:
        if rec["sweep"] == "imu_rate":
            axis, x = "imu_rate_hz", rec["imu_rate"]
        else:
            axis, x = "inv_sigma_db", sigma_to_db(rec["sigma_r"])
        rows.append([rec["filter"], rec["scenario"], axis, x,
                     rec["rmse_pos_mean"], rec["rmse_pos_std"], rec["rmse_ori_mean"], rec["rmse_ori_std"]])
    rows.sort(key=lambda r: (r[0], r[1], r[2], r[3]))
    return rows


def cmd_plotdata(args):
    records = []
    for path in args.summaries:
        records.extend(read_summary(path))
    path = _write_csv(Path(args.out) / "plotdata.csv", PLOT_COLUMNS, plot_rows(records))
    print(f"wrote {path}")
    return 0


# -- entry point ----------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="manifold-track", description="IMU + range tracking experiments on SO(3).")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--scenario", required=True, help="scenario file or bundled name")
        sp.add_argument("--trials", type=int, help="Monte-Carlo trials")
        sp.add_argument("--seed", type=int, help="seed of trial 0 (trial i uses seed + i)")
        sp.add_argument("--out", required=True, help="output directory")

    s = sub.add_parser("simulate", help="write truth, IMU and range streams")
    common(s)
    r = sub.add_parser("run", help="run filters and write estimates, errors and summaries")
    common(r)
    r.add_argument("--filters", help="comma list of EKF,UKF,EKFRie,UKFRie (default all)")
    r.add_argument("--sweep-sigma", help="comma list of range noise levels in m, or '<n>db'")
    r.add_argument("--sweep-imu-rate", help="comma list of IMU rates in Hz")
    d = sub.add_parser("plotdata", help="turn summary files into long-format plot tables")
    d.add_argument("summaries", nargs="+", help="summary.csv files")
    d.add_argument("--out", required=True, help="output directory")
    return p


COMMANDS = {"simulate": cmd_simulate, "run": cmd_run, "plotdata": cmd_plotdata}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "trials", None) is not None and args.trials < 1:
            raise UsageError("--trials must be at least 1")
        try:
            thread_cap()
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"manifold-track: usage error: {exc}", file=sys.stderr)
        return 2
    except (InvalidArgumentError, NumericalError, SummaryParseError, OSError) as exc:
        print(f"manifold-track: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
