"""EKF, UKF and their SO(3)-retracted variants (EKFRie, UKFRie).

All four share the zero-order-hold model of :mod:`kinematics`.  The
Riemannian variants retract the orientation block onto SO(3) after the time
update and after each measurement update, and carry the 9x9 orientation
covariance along with a vector transport.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import so3
from .exceptions import InvalidArgumentError, NumericalError
from .kinematics import (
    POS,
    STATE_DIM,
    THETA,
    VEL,
    build_pi,
    discrete_f,
    discrete_g,
    measure_h,
    measure_jacobian,
    rotation_of,
)
from .sensors import accel_to_centroid, accel_variance_to_centroid


class FilterKind(str, enum.Enum):
    EKF = "EKF"
    UKF = "UKF"
    EKFRIE = "EKFRie"
    UKFRIE = "UKFRie"

    @classmethod
    def parse(cls, name):
        for k in cls:
            if k.value.lower() == str(name).strip().lower():
                return k
        raise InvalidArgumentError(f"unknown filter kind {name!r}; choose from {[k.value for k in cls]}")

    @property
    def riemannian(self):
        return self in (FilterKind.EKFRIE, FilterKind.UKFRIE)


def default_p0(theta=1e-4, pos=1e-2, vel=1e-2):
    return np.diag([theta] * 9 + [pos] * 3 + [vel] * 3)


@dataclass
class FilterConfig:
    """Filter tuning.

    ``process_noise`` selects how the UKF injects input noise: ``"literal"``
    sums ``w_l**2 g(chi_l) Q g(chi_l)^T`` over sigma points, ``"additive"``
    adds ``g(x) Q g(x)^T`` once.  ``theta_cov_source`` picks which 9x9
    orientation block the Riemannian filters transport: ``"previous"`` moves
    the block of the previous on-manifold estimate, ``"current"`` moves the
    block just produced by the Euclidean time or measurement update.
    """

    T: float
    ms_data_rate: int
    q: np.ndarray
    z: np.ndarray
    p0: np.ndarray = field(default_factory=default_p0)
    ukf_alpha: float = 1e-3
    ukf_iota: float = 1.0
    ukf_beta: float = 2.0
    process_noise: str = "literal"
    theta_cov_source: str = "previous"
    lever_arm: np.ndarray | None = None

    def __post_init__(self):
        if not self.T > 0:
            raise InvalidArgumentError("T must be positive")
        if int(self.ms_data_rate) != self.ms_data_rate or self.ms_data_rate < 1:
            raise InvalidArgumentError("ms_data_rate must be a positive integer")
        self.ms_data_rate = int(self.ms_data_rate)
        self.q = np.asarray(self.q, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        self.p0 = np.asarray(self.p0, dtype=float)
        if self.q.shape != (6, 6) or self.z.shape != (9, 9) or self.p0.shape != (15, 15):
            raise InvalidArgumentError("q, z, p0 must be 6x6, 9x9 and 15x15")
        for name in ("q", "z", "p0"):
            m = getattr(self, name)
            if np.linalg.eigvalsh(0.5 * (m + m.T)).min() < -1e-12 * max(1.0, np.abs(m).max()):
                raise InvalidArgumentError(f"{name} is not positive semidefinite")
        if self.process_noise not in ("literal", "additive"):
            raise InvalidArgumentError(f"unknown process_noise {self.process_noise!r}")
        if self.theta_cov_source not in ("previous", "current"):
            raise InvalidArgumentError(f"unknown theta_cov_source {self.theta_cov_source!r}")
        if self.lever_arm is not None:
            self.lever_arm = np.asarray(self.lever_arm, dtype=float)
            if not np.any(self.lever_arm):
                self.lever_arm = None


@dataclass
class FilterState:
    """Estimate ``x`` (15), covariance ``p`` (15x15), step counter ``k`` and gate counter ``k1``."""

    x: np.ndarray
    p: np.ndarray
    k: int = 0
    k1: int = 0
    omega_prev: np.ndarray | None = None

    @property
    def rotation(self):
        return rotation_of(self.x)


def initial_state(x0, cfg):
    return FilterState(np.array(x0, dtype=float), cfg.p0.copy(), 0, 0, None)


def _sym(p):
    return 0.5 * (p + p.T)


def _gain(s, cross_t):
    """``cross_t.T @ inv(s)``; a diverged filter falls back to the pseudo-inverse."""
    try:
        k_gain = np.linalg.solve(s, cross_t).T
    except np.linalg.LinAlgError:
        k_gain = (np.linalg.pinv(s, hermitian=True) @ cross_t).T
    if not np.all(np.isfinite(k_gain)):
        raise NumericalError("innovation covariance is not finite")
    return k_gain


def _centroid_input(st, u, cfg):
    """Move the accelerometer reading and its variance to the centroid."""
    u = np.asarray(u, dtype=float)
    if cfg.lever_arm is None:
        return u, cfg.q
    omega = u[:3]
    omega_prev = omega if st.omega_prev is None else st.omega_prev
    r = rotation_of(st.x)
    a_c = accel_to_centroid(u[3:], r, omega, omega_prev, cfg.T, cfg.lever_arm)
    var_r = np.clip(np.diag(st.p)[THETA], 0.0, None)
    var_a = accel_variance_to_centroid(
        np.diag(cfg.q)[3:], r, var_r, omega, cfg.q[0, 0], cfg.T, cfg.lever_arm, omega_prev
    )
    q = cfg.q.copy()
    q[3:, 3:] = np.diag(var_a)
    return np.concatenate([omega, a_c]), q


def _orientation_increment(theta_prev, omega, T):
    """Tangent step ``T * Pi(R) * omega`` reshaped to 3x3."""
    return so3.unvec(T * build_pi(so3.unvec(theta_prev)) @ omega)


def kalman_update(x, p, y, cfg, geom):
    """Linear Kalman update; returns ``(x, P, increment)``."""
    h = measure_jacobian(geom)
    hp = h @ p
    s = hp @ h.T + cfg.z
    k_gain = _gain(s, hp)
    dx = k_gain @ (np.asarray(y, dtype=float) - measure_h(x, geom))
    p_new = p - k_gain @ hp
    return x + dx, _sym(p_new), dx


def _time_update(st, u, q, cfg):
    f = discrete_f(cfg.T)
    g = discrete_g(st.x, cfg.T)
    x = f @ st.x + g @ u
    p = f @ st.p @ f.T + g @ q @ g.T
    return x, _sym(p)


def ekf_step(st, u, maybe_y, cfg, geom):
    """Conventional EKF: Euclidean time update, Kalman update when ``maybe_y`` is given."""
    u_c, q = _centroid_input(st, u, cfg)
    x, p = _time_update(st, u_c, q, cfg)
    if maybe_y is not None:
        x, p, _ = kalman_update(x, p, maybe_y, cfg, geom)
    return FilterState(x, p, st.k + 1, st.k1 + 1, np.asarray(u, dtype=float)[:3].copy())


def _transport_block(p_source, x_from, x_to, repair):
    block = so3.transport_covariance(p_source, x_from, x_to)
    return so3.nearest_spd(block) if repair else block


def ekfrie_step(st, u, maybe_y, cfg, geom):
    """EKF with QR retraction of the orientation and covariance transport."""
    u_c, q = _centroid_input(st, u, cfg)
    theta_prev = so3.unvec(st.x[THETA])
    x, p = _time_update(st, u_c, q, cfg)

    theta_pred = so3.retract(theta_prev, _orientation_increment(st.x[THETA], u_c[:3], cfg.T))
    src = st.p[THETA, THETA] if cfg.theta_cov_source == "previous" else p[THETA, THETA]
    p[THETA, THETA] = _transport_block(src, theta_prev, theta_pred, repair=False)
    x[THETA] = so3.vec(theta_pred)

    if maybe_y is not None:
        p_prior_theta = p[THETA, THETA].copy()
        x, p, dx = kalman_update(x, p, maybe_y, cfg, geom)
        theta_post = so3.retract(theta_pred, so3.unvec(dx[THETA]))
        src = p_prior_theta if cfg.theta_cov_source == "previous" else p[THETA, THETA]
        p[THETA, THETA] = _transport_block(src, theta_pred, theta_post, repair=False)
        x[THETA] = so3.vec(theta_post)
    return FilterState(x, _sym(p), st.k + 1, st.k1 + 1, np.asarray(u, dtype=float)[:3].copy())


# -- unscented variants --------------------------------------------------------


def ukf_weights(n, alpha, iota, beta):
    """Scaled unscented-transform weights; returns ``(scale, wm, wc)``.

    ``scale = alpha**2 * (n + iota)`` is the factor ``n + lambda`` applied to
    the covariance before taking its Cholesky factor.
    """
    scale = alpha**2 * (n + iota)
    lam = scale - n
    wm = np.full(2 * n + 1, 0.5 / scale)
    wc = wm.copy()
    wm[0] = lam / scale
    wc[0] = lam / scale + (1.0 - alpha**2 + beta)
    return scale, wm, wc


def sigma_points(x, p, alpha, iota, beta=2.0):
    """Sigma points ``x, x + col_i, x - col_i`` of ``sqrt((L + lambda) P)``.

    Returns ``(points, wm, wc)`` with ``points`` of shape ``(2L + 1, L)``.
    The covariance is repaired with :func:`so3.nearest_spd` when its
    Cholesky factorization fails.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    scale, wm, wc = ukf_weights(n, alpha, iota, beta)
    p = _sym(np.asarray(p, dtype=float))
    try:
        chol = np.linalg.cholesky(p)
    except np.linalg.LinAlgError:
        try:
            chol = np.linalg.cholesky(so3.nearest_spd(p))
        except np.linalg.LinAlgError as exc:
            raise NumericalError("covariance has no Cholesky factor after SPD repair") from exc
    pts = np.empty((2 * n + 1, n))
    pts[0] = x
    # sqrt(scale * P) = sqrt(scale) * chol(P); factoring P unscaled avoids
    # spurious failures on badly conditioned covariances
    spread = np.sqrt(scale) * chol.T
    pts[1:n + 1] = x + spread
    pts[n + 1:] = x - spread
    return pts, wm, wc


def _rotations(pts):
    # column-major theta -> (n, 3, 3)
    return pts[:, THETA].reshape(-1, 3, 3).transpose(0, 2, 1)


def _propagate_points(pts, u, T):
    """ZOH propagation of every sigma point; returns points and input matrices."""
    n = pts.shape[0]
    rots = _rotations(pts)
    omega, acc = u[:3], u[3:]
    out = pts.copy()
    out[:, POS] += T * pts[:, VEL]
    out[:, THETA] += T * (rots @ so3.hat(omega)).transpose(0, 2, 1).reshape(n, 9)
    ra = rots @ acc
    out[:, POS] += 0.5 * T * T * ra
    out[:, VEL] += T * ra
    g = np.zeros((n, STATE_DIM, 6))
    g[:, 0:3, 1] = -rots[:, :, 2]
    g[:, 0:3, 2] = rots[:, :, 1]
    g[:, 3:6, 0] = rots[:, :, 2]
    g[:, 3:6, 2] = -rots[:, :, 0]
    g[:, 6:9, 0] = -rots[:, :, 1]
    g[:, 6:9, 1] = rots[:, :, 0]
    g[:, THETA, 0:3] *= T
    g[:, POS, 3:6] = 0.5 * T * T * rots
    g[:, VEL, 3:6] = T * rots
    return out, g


def _weighted_stats(pts, wm, wc):
    """Mean and covariance, centred on the first point to limit cancellation."""
    d0 = pts - pts[0]
    mean = pts[0] + wm @ d0
    dev = pts - mean
    return mean, dev, (dev.T * wc) @ dev


def _measure_points(pts, geom):
    rots = _rotations(pts)
    y = pts[:, None, POS] + np.einsum("nij,tj->nti", rots, geom.points)
    return y.reshape(len(pts), 9)


def unscented_predict(st, u, q, cfg):
    """Sigma-point time update; returns ``(x, P, weighted orientation tangent)``."""
    pts, wm, wc = sigma_points(st.x, st.p, cfg.ukf_alpha, cfg.ukf_iota, cfg.ukf_beta)
    prop, g = _propagate_points(pts, u, cfg.T)
    x, _, p = _weighted_stats(prop, wm, wc)
    if cfg.process_noise == "literal":
        gq = g * np.sqrt(np.diag(q))
        p = p + np.einsum("n,nij,nkj->ik", wc**2, gq, gq)
    else:
        g0 = discrete_g(st.x, cfg.T)
        p = p + g0 @ q @ g0.T
    tangent = wm @ (prop[:, THETA] - pts[:, THETA])
    return x, _sym(p), tangent


def unscented_update(x, p, y, cfg, geom):
    """Sigma-point measurement update with fresh points drawn from ``(x, p)``.

    Returns ``(x, P, increment, innovation covariance)``.
    """
    pts, wm, wc = sigma_points(x, p, cfg.ukf_alpha, cfg.ukf_iota, cfg.ukf_beta)
    ys = _measure_points(pts, geom)
    y_hat, ydev, s = _weighted_stats(ys, wm, wc)
    s = _sym(s + cfg.z)
    xdev = pts - (pts[0] + wm @ (pts - pts[0]))
    cross = (xdev.T * wc) @ ydev
    k_gain = _gain(s, cross.T)
    dx = k_gain @ (np.asarray(y, dtype=float) - y_hat)
    p_new = p - k_gain @ s @ k_gain.T
    return x + dx, _sym(p_new), dx, s


def ukf_step(st, u, maybe_y, cfg, geom):
    """Conventional UKF with Euclidean sigma-point statistics."""
    u_c, q = _centroid_input(st, u, cfg)
    x, p, _ = unscented_predict(st, u_c, q, cfg)
    if maybe_y is not None:
        x, p, _, _ = unscented_update(x, p, maybe_y, cfg, geom)
    return FilterState(x, p, st.k + 1, st.k1 + 1, np.asarray(u, dtype=float)[:3].copy())


def ukfrie_step(st, u, maybe_y, cfg, geom):
    """UKF with QR retraction, covariance transport and SPD repair of the orientation block."""
    u_c, q = _centroid_input(st, u, cfg)
    theta_prev = so3.unvec(st.x[THETA])
    x, p, tangent = unscented_predict(st, u_c, q, cfg)

    theta_pred = so3.retract(theta_prev, so3.unvec(tangent))
    src = st.p[THETA, THETA] if cfg.theta_cov_source == "previous" else p[THETA, THETA]
    p[THETA, THETA] = _transport_block(src, theta_prev, theta_pred, repair=True)
    x[THETA] = so3.vec(theta_pred)

    if maybe_y is not None:
        p_prior_theta = p[THETA, THETA].copy()
        x, p, dx, _ = unscented_update(x, p, maybe_y, cfg, geom)
        theta_post = so3.retract(theta_pred, so3.unvec(dx[THETA]))
        src = p_prior_theta if cfg.theta_cov_source == "previous" else p[THETA, THETA]
        p[THETA, THETA] = _transport_block(src, theta_pred, theta_post, repair=True)
        x[THETA] = so3.vec(theta_post)
    return FilterState(x, _sym(p), st.k + 1, st.k1 + 1, np.asarray(u, dtype=float)[:3].copy())


STEP_FUNCTIONS = {
    FilterKind.EKF: ekf_step,
    FilterKind.UKF: ukf_step,
    FilterKind.EKFRIE: ekfrie_step,
    FilterKind.UKFRIE: ukfrie_step,
}


@dataclass
class FilterTrace:
    """Estimates of one run: ``x[k]`` after step ``k`` (``x[0]`` is the prior)."""

    kind: FilterKind
    x: np.ndarray
    p: np.ndarray | None
    n_updates: int
    final: FilterState


def run_filter(kind, imu, measurements, cfg, geom, x0, keep_cov=False):
    """Run one filter over an IMU stream.

    Parameters
    ----------
    kind : FilterKind or str
    imu : ndarray, shape (N + 1, 6)
        ``imu[k]`` drives the step from ``k`` to ``k + 1``; the last row is unused.
    measurements : dict[int, ndarray]
        Step index -> stacked transmitter measurement (9,).  Keys must be
        multiples of ``cfg.ms_data_rate``.
    """
    kind = FilterKind.parse(kind) if not isinstance(kind, FilterKind) else kind
    step = STEP_FUNCTIONS[kind]
    imu = np.asarray(imu, dtype=float)
    n = imu.shape[0] - 1
    for k in measurements:
        if k % cfg.ms_data_rate != 0 or not 0 < k <= n:
            raise InvalidArgumentError(
                f"measurement at step {k} is not on the {cfg.ms_data_rate}-step gate"
            )
    st = initial_state(x0, cfg)
    xs = np.empty((n + 1, STATE_DIM))
    xs[0] = st.x
    ps = None
    if keep_cov:
        ps = np.empty((n + 1, STATE_DIM, STATE_DIM))
        ps[0] = st.p
    updates = 0
    for k in range(1, n + 1):
        y = measurements.get(k) if (st.k1 + 1) % cfg.ms_data_rate == 0 else None
        if y is not None:
            updates += 1
        try:
            st = step(st, imu[k - 1], y, cfg, geom)
        except NumericalError as exc:
            raise NumericalError(f"{kind.value} failed at step {k}: {exc}") from exc
        xs[k] = st.x
        if keep_cov:
            ps[k] = st.p
    return FilterTrace(kind, xs, ps, updates, st)
