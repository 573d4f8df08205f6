"""Monte-Carlo harness: noisy sensor draws, filter runs and error bookkeeping."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .exceptions import NumericalError
from .filters import FilterConfig, FilterKind, default_p0, run_filter
from .kinematics import POS, make_state
from .metrics import RunResult, geodesic_angles, nearest_rotation, position_errors
from .scenarios import default_beacons, emit_streams, generate_truth
from .sensors import (
    accel_from_centroid,
    imu_variance_from_datasheet,
    input_covariance,
    multilaterate,
    simulate_ranges,
)

THREADS_ENV = "MANIFOLD_TRACK_THREADS"


@dataclass
class Setup:
    """Everything shared by the trials of one scenario."""

    spec: object
    truth: object
    beacons: object
    streams: object
    q: np.ndarray
    cfg: FilterConfig


@dataclass
class TrialData:
    seed: int
    imu: np.ndarray
    ms_steps: np.ndarray
    ranges: np.ndarray
    y_ms: np.ndarray
    converged: np.ndarray


def imu_covariance(spec):
    w2_deg, a2 = imu_variance_from_datasheet(spec.gyro_density, spec.accel_density, spec.imu_rate)
    return input_covariance(w2_deg * (np.pi / 180.0) ** 2, a2)


def filter_config(spec, q=None):
    f = spec.filter
    q = imu_covariance(spec) if q is None else q
    return FilterConfig(
        T=spec.T,
        ms_data_rate=spec.ms_ratio,
        q=q,
        z=spec.sigma_r**2 * np.eye(9),
        p0=default_p0(f.p0_theta, f.p0_pos, f.p0_vel),
        ukf_alpha=f.ukf_alpha,
        ukf_iota=f.ukf_iota,
        ukf_beta=f.ukf_beta,
        process_noise=f.process_noise,
        theta_cov_source=f.theta_cov_source,
        lever_arm=np.asarray(spec.lever_arm, dtype=float),
    )


def prepare(spec):
    truth = generate_truth(spec)
    beacons = spec.beacons if spec.beacons is not None else default_beacons(spec, truth)
    streams = emit_streams(spec, truth)
    q = imu_covariance(spec)
    return Setup(spec, truth, beacons, streams, q, filter_config(spec, q))


def _true_imu(setup):
    imu = setup.streams.imu.copy()
    z = np.asarray(setup.spec.lever_arm, dtype=float)
    if np.any(z):
        tr = setup.truth
        for k in range(len(imu)):
            w_prev = tr.omega[k - 1] if k > 0 else tr.omega[k]
            imu[k, 3:] = accel_from_centroid(imu[k, 3:], tr.r[k], tr.omega[k], w_prev, setup.spec.T, z)
    return imu


def simulate_trial(setup, seed):
    """Draw IMU noise, ranges and multilaterated transmitter positions for one trial."""
    rng = np.random.default_rng(seed)
    imu_true = _true_imu(setup)
    sd = np.sqrt(np.diag(setup.q))
    imu = imu_true + sd * rng.standard_normal(imu_true.shape)
    st = setup.streams
    m = len(setup.beacons)
    ranges = np.empty((len(st.ms_steps), m, 3))
    y = np.empty((len(st.ms_steps), 9))
    conv = np.empty(len(st.ms_steps), dtype=bool)
    init = None
    for i in range(len(st.ms_steps)):
        rs = simulate_ranges(st.ms_tx[i], setup.beacons, setup.spec.sigma_r, rng)
        ranges[i] = rs.s
        y[i], conv[i] = multilaterate(rs, setup.beacons, init)
        init = y[i].reshape(3, 3)
    return TrialData(seed, imu, st.ms_steps.copy(), ranges, y, conv)


def initial_state(setup):
    tr = setup.truth
    return make_state(tr.r[0], tr.p[0], tr.v[0])


def evaluate(setup, kind, x_hist, seed):
    """Per-step errors for steps ``1..N``; the prior at step 0 is excluded."""
    kind = FilterKind.parse(kind) if not isinstance(kind, FilterKind) else kind
    tr = setup.truth
    pos = position_errors(x_hist[1:, POS], tr.p[1:])
    rots = x_hist[1:, :9].reshape(-1, 3, 3).transpose(0, 2, 1)
    if not kind.riemannian:
        rots = np.array([nearest_rotation(r) for r in rots])
    ori = geodesic_angles(rots, tr.r[1:])
    return RunResult(kind.value, int(seed), setup.spec.name or setup.spec.kind.value, pos, ori)


def run_trial(setup, kinds, seed):
    """Run every filter in ``kinds`` on the same sensor draw (common random numbers)."""
    data = simulate_trial(setup, seed)
    meas = {int(k): y for k, y in zip(data.ms_steps, data.y_ms)}
    x0 = initial_state(setup)
    out = []
    for kind in kinds:
        try:
            trace = run_filter(kind, data.imu, meas, setup.cfg, setup.spec.geometry, x0)
        except NumericalError as exc:
            raise NumericalError(f"{setup.spec.name or 'scenario'}, seed {seed}: {exc}") from exc
        out.append((evaluate(setup, kind, trace.x, seed), trace.x))
    return out


def thread_cap(default=None):
    """Worker count: ``MANIFOLD_TRACK_THREADS`` when set, else the CPU count."""
    raw = os.environ.get(THREADS_ENV)
    n = default if default is not None else (os.cpu_count() or 1)
    if raw is not None and raw.strip():
        try:
            cap = int(raw)
        except ValueError as exc:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
        if cap < 1:
            raise ValueError(f"{THREADS_ENV} must be at least 1")
        n = min(n, cap) if default is not None else cap
    return max(1, n)


def _worker(args):
    spec, kinds, seed, keep_x = args
    setup = prepare(spec)
    res = run_trial(setup, kinds, seed)
    return [(r, x if keep_x else None) for r, x in res]


def monte_carlo(spec, kinds, trials, seed_base=0, workers=None, keep_x=False):
    """Run ``trials`` trials with seeds ``seed_base + i``.

    Returns a list with one entry per trial, each a list of ``(RunResult, x)``
    pairs in the order of ``kinds`` (``x`` is ``None`` unless ``keep_x``).
    Results do not depend on the worker count.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    kinds = [FilterKind.parse(k) if not isinstance(k, FilterKind) else k for k in kinds]
    workers = thread_cap() if workers is None else workers
    seeds = [seed_base + i for i in range(trials)]
    if workers <= 1 or trials == 1:
        setup = prepare(spec)
        return [[(r, x if keep_x else None) for r, x in run_trial(setup, kinds, s)] for s in seeds]
    with ProcessPoolExecutor(max_workers=min(workers, trials)) as pool:
        return list(pool.map(_worker, [(spec, kinds, s, keep_x) for s in seeds]))
