from __future__ import annotations

import dataclasses

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from manifold_track import filters as fl
from manifold_track.exceptions import InvalidArgumentError, NumericalError
from manifold_track.experiment import monte_carlo, prepare, simulate_trial
from manifold_track.kinematics import POS, THETA, TransmitterGeometry, make_state, measure_h, measure_jacobian
from manifold_track.metrics import aggregate_trials
from manifold_track.scenarios import load_scenario
from manifold_track.so3 import check_on_manifold, unvec
from manifold_track.sensors import input_covariance

GEOM = TransmitterGeometry()


def config(**kw):
    base = dict(T=0.1, ms_data_rate=1, q=input_covariance(1e-5, 1e-4), z=1e-2 * np.eye(9))
    base.update(kw)
    return fl.FilterConfig(**base)


def random_spd(rng, n=15, scale=1e-2):
    a = rng.normal(size=(n, n))
    return scale * (a @ a.T / n + 0.1 * np.eye(n))


def static_run(kind, steps=100, **kw):
    cfg = config(q=np.zeros((6, 6)), **kw)
    x0 = make_state(np.eye(3), [1.0, 2.0, 0.5], np.zeros(3))
    y = measure_h(x0, GEOM)
    st = fl.initial_state(x0, cfg)
    step = fl.STEP_FUNCTIONS[fl.FilterKind.parse(kind)]
    for k in range(steps):
        st = step(st, np.zeros(6), y, cfg, GEOM)
    return np.abs(st.x - x0).max()


def test_filter_kind_parse():
    assert fl.FilterKind.parse("ekfrie") is fl.FilterKind.EKFRIE
    assert fl.FilterKind.UKFRIE.riemannian and not fl.FilterKind.UKF.riemannian
    with pytest.raises(InvalidArgumentError):
        fl.FilterKind.parse("PF")


def test_config_validation():
    with pytest.raises(InvalidArgumentError):
        config(T=0.0)
    with pytest.raises(InvalidArgumentError):
        config(ms_data_rate=0)
    with pytest.raises(InvalidArgumentError):
        config(q=-np.eye(6))
    with pytest.raises(InvalidArgumentError):
        config(process_noise="other")
    with pytest.raises(InvalidArgumentError):
        config(theta_cov_source="later")
    assert config(lever_arm=np.zeros(3)).lever_arm is None


@pytest.mark.parametrize("kind", ["EKF", "EKFRie"])
def test_ekf_static_exact(kind):
    assert static_run(kind) < 1e-9


@pytest.mark.parametrize("kind", ["UKF", "UKFRie"])
def test_ukf_static_exact(kind):
    assert static_run(kind) < 1e-6


def test_prediction_grows_covariance():
    rng = np.random.default_rng(0)
    cfg = config()
    st = fl.FilterState(make_state(Rotation.random(random_state=rng).as_matrix(), np.zeros(3), np.ones(3)),
                        random_spd(rng))
    prev = np.trace(st.p)
    for _ in range(20):
        st = fl.ekf_step(st, rng.normal(size=6), None, cfg, GEOM)
        assert np.trace(st.p) >= prev
        prev = np.trace(st.p)


def test_measurement_update_shrinks_predicted_measurement_covariance():
    rng = np.random.default_rng(1)
    h = measure_jacobian(GEOM)
    cfg = config()
    for _ in range(10):
        p = random_spd(rng)
        x = make_state(Rotation.random(random_state=rng).as_matrix(), rng.normal(size=3), rng.normal(size=3))
        _, p_new, _ = fl.kalman_update(x, p, rng.normal(size=9), cfg, GEOM)
        assert np.trace(h @ p_new @ h.T) < np.trace(h @ p @ h.T)
        assert np.allclose(p_new, p_new.T, atol=1e-15)


def test_sigma_points_spread_with_unit_alpha():
    x = np.arange(15.0)
    pts, wm, wc = fl.sigma_points(x, np.eye(15), alpha=1.0, iota=1.0)
    assert pts.shape == (31, 15)
    assert np.allclose(np.linalg.norm(pts[1:] - x, axis=1), 4.0)
    assert wm.sum() == pytest.approx(1.0)


@pytest.mark.parametrize("alpha", [1.0, 1e-3])
def test_sigma_points_reproduce_mean_and_covariance(alpha):
    rng = np.random.default_rng(2)
    x = rng.normal(size=15)
    p = random_spd(rng, scale=1.0)
    pts, wm, wc = fl.sigma_points(x, p, alpha=alpha, iota=1.0, beta=2.0)
    mean, _, cov = fl._weighted_stats(pts, wm, wc)
    # the centre point carries (1 - alpha^2 + beta) extra covariance weight, at zero deviation
    assert np.allclose(mean, x, atol=1e-9)
    assert np.allclose(cov, p, atol=1e-9)


def test_sigma_points_repair_indefinite_covariance():
    p = np.eye(15)
    p[0, 0] = -1e-12
    pts, _, _ = fl.sigma_points(np.zeros(15), p, 1e-3, 1.0)
    assert np.all(np.isfinite(pts))


def test_unscented_update_equals_kalman_update_for_linear_measurement():
    rng = np.random.default_rng(3)
    cfg = config()
    for _ in range(5):
        x = make_state(Rotation.random(random_state=rng).as_matrix(), rng.normal(size=3), rng.normal(size=3))
        p = random_spd(rng)
        y = measure_h(x, GEOM) + 0.1 * rng.normal(size=9)
        xe, pe, _ = fl.kalman_update(x, p, y, cfg, GEOM)
        xu, pu, _, s = fl.unscented_update(x, p, y, cfg, GEOM)
        assert np.abs(xe - xu).max() < 1e-8
        assert np.abs(pe - pu).max() < 1e-8
        assert np.allclose(s, s.T) and np.linalg.eigvalsh(s).min() > 0


def test_zero_rate_riemannian_prediction_matches_conventional():
    rng = np.random.default_rng(4)
    x0 = make_state(Rotation.random(random_state=rng).as_matrix(), np.zeros(3), np.zeros(3))
    cfg = config()
    # the unscented mean carries rounding from weights of order 1e6
    pairs = [(fl.ekf_step, fl.ekfrie_step, 1e-12, 1e-12), (fl.ukf_step, fl.ukfrie_step, 1e-9, 1e-7)]
    for conv, rie, tol, pos_tol in pairs:
        a = b = fl.initial_state(x0, cfg)
        for _ in range(30):
            u = np.concatenate([np.zeros(3), rng.normal(size=3)])
            a, b = conv(a, u, None, cfg, GEOM), rie(b, u, None, cfg, GEOM)
            assert np.abs(a.x[THETA] - b.x[THETA]).max() <= tol
            assert np.abs(a.x[POS] - b.x[POS]).max() <= pos_tol


def _trace_on(name, kind, **cfg_changes):
    setup = prepare(load_scenario(name))
    cfg = dataclasses.replace(setup.cfg, **cfg_changes) if cfg_changes else setup.cfg
    d = simulate_trial(setup, 11)
    meas = {int(k): y for k, y in zip(d.ms_steps, d.y_ms)}
    x0 = make_state(setup.truth.r[0], setup.truth.p[0], setup.truth.v[0])
    return fl.run_filter(kind, d.imu, meas, cfg, setup.spec.geometry, x0, keep_cov=True), setup


@pytest.mark.parametrize("kind", ["EKFRie", "UKFRie"])
def test_riemannian_filters_stay_on_manifold(kind):
    trace, _ = _trace_on("zigzag", kind)
    for x, p in zip(trace.x, trace.p):
        assert check_on_manifold(unvec(x[THETA]), 1e-6)
        assert np.linalg.norm(p - p.T) < 1e-9


def test_conventional_ekf_leaves_manifold():
    trace, _ = _trace_on("zigzag", "EKF")
    assert not check_on_manifold(unvec(trace.x[-1, THETA]), 1e-6)


def test_ukfrie_covariance_factorizes_every_step():
    trace, _ = _trace_on("stair", "UKFRie")
    for p in trace.p:
        np.linalg.cholesky(p[THETA, THETA])
        assert np.linalg.norm(p - p.T) < 1e-9


@pytest.mark.parametrize("kind", list(fl.FilterKind))
def test_covariance_stays_symmetric(kind):
    trace, _ = _trace_on("upath", kind)
    assert max(np.linalg.norm(p - p.T) for p in trace.p) < 1e-9


@pytest.mark.parametrize("changes", [dict(theta_cov_source="current"), dict(process_noise="additive")])
def test_alternative_options_run(changes):
    for kind in fl.FilterKind:
        trace, setup = _trace_on("upath", kind, **changes)
        assert np.all(np.isfinite(trace.x))
        if kind is fl.FilterKind.EKFRIE:
            assert np.abs(trace.x[:, POS] - setup.truth.p).max() < 1.0


def test_innovation_covariance_is_psd_along_a_run():
    setup = prepare(load_scenario("bridge"))
    d = simulate_trial(setup, 3)
    meas = {int(k): y for k, y in zip(d.ms_steps, d.y_ms)}
    st = fl.initial_state(make_state(setup.truth.r[0], setup.truth.p[0], setup.truth.v[0]), setup.cfg)
    for k in range(1, len(d.imu)):
        x, p, _ = fl.unscented_predict(st, d.imu[k - 1], setup.cfg.q, setup.cfg)
        if k in meas:
            _, _, _, s = fl.unscented_update(x, p, meas[k], setup.cfg, setup.spec.geometry)
            assert np.allclose(s, s.T, atol=1e-12)
            assert np.linalg.eigvalsh(s).min() > 0
        st = fl.ukf_step(st, d.imu[k - 1], meas.get(k), setup.cfg, setup.spec.geometry)


def test_gating_counts_and_alignment():
    x0 = make_state(np.eye(3), np.zeros(3), np.zeros(3))
    imu = np.zeros((101, 6))
    y = measure_h(x0, GEOM)
    for ratio in (1, 3, 10):
        cfg = config(ms_data_rate=ratio)
        meas = {k: y for k in range(ratio, 101, ratio)}
        trace = fl.run_filter("EKF", imu, meas, cfg, GEOM, x0)
        assert trace.n_updates == 100 // ratio
        assert trace.x.shape == (101, 15)
    with pytest.raises(InvalidArgumentError):
        fl.run_filter("EKF", imu, {5: y}, config(ms_data_rate=10), GEOM, x0)
    with pytest.raises(InvalidArgumentError):
        fl.run_filter("EKF", imu, {200: y}, config(ms_data_rate=10), GEOM, x0)


def test_run_is_deterministic():
    a, _ = _trace_on("upath", "UKFRie")
    b, _ = _trace_on("upath", "UKFRie")
    assert np.array_equal(a.x, b.x)


def test_lever_arm_transfer_keeps_tracking():
    from manifold_track.scenarios import with_overrides

    spec = with_overrides(load_scenario("upath"), lever_arm=(0.05, 0.0, 0.02))
    res = monte_carlo(spec, ["EKFRie", "UKFRie"], 3, 0, workers=1)
    agg = aggregate_trials([r for t in res for r, _ in t])
    assert agg["EKFRie"].rmse_pos_mean < 0.2
    assert agg["UKFRie"].rmse_pos_mean < 0.3


def test_static_riemannian_ekf_matches_conventional():
    res = monte_carlo(load_scenario("static"), ["EKF", "EKFRie"], 100, 0, workers=1)
    agg = aggregate_trials([r for t in res for r, _ in t])
    e, r = agg["EKF"].rmse_pos_mean, agg["EKFRie"].rmse_pos_mean
    assert abs(r - e) / e < 0.05


def test_singular_innovation_falls_back_to_pseudo_inverse():
    cfg = config(z=np.zeros((9, 9)))
    x = make_state(np.eye(3), np.zeros(3), np.zeros(3))
    xn, pn, dx = fl.kalman_update(x, np.zeros((15, 15)), np.ones(9), cfg, GEOM)
    assert np.array_equal(xn, x) and np.all(pn == 0)
    p = np.eye(15)
    p[0, 0] = np.nan
    with pytest.raises(NumericalError):
        fl.kalman_update(x, p, np.ones(9), config(), GEOM)
