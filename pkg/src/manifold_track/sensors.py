"""Synthetic IMU and range sensors, lever-arm transfer and multilateration."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .exceptions import InvalidArgumentError
from .so3 import hat

G0 = 9.8
GN_TOL = 1e-10
GN_MAXITER = 50


@dataclass(frozen=True)
class BeaconMap:
    """Anchor positions in the global frame, one row per beacon."""

    b: np.ndarray

    def __post_init__(self):
        b = np.array(self.b, dtype=float)
        if b.ndim != 2 or b.shape[1] != 3:
            raise InvalidArgumentError(f"beacons must be an (M, 3) array, got {b.shape}")
        if b.shape[0] < 4:
            raise InvalidArgumentError("at least 4 beacons are required")
        if np.linalg.matrix_rank(b - b.mean(axis=0), tol=1e-9) < 3:
            raise InvalidArgumentError("beacons are coplanar")
        b.setflags(write=False)
        object.__setattr__(self, "b", b)

    def __len__(self):
        return self.b.shape[0]

    @classmethod
    def box_corners(cls, lo, hi, margin=1.0):
        """Eight beacons on the corners of the box ``[lo, hi]`` grown by ``margin``."""
        lo = np.asarray(lo, dtype=float) - margin
        hi = np.asarray(hi, dtype=float) + margin
        corners = [[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])]
        return cls(np.array(corners))


@dataclass(frozen=True)
class RangeSet:
    """Noisy ranges ``s[j, i]`` from transmitter ``i`` to beacon ``j``."""

    s: np.ndarray
    sigma_s2: float


def imu_variance_from_datasheet(density_gyro, density_accel, fs):
    """White-noise variances from datasheet noise densities.

    Parameters
    ----------
    density_gyro : float
        Rate noise spectral density in deg/s/sqrt(Hz).
    density_accel : float
        Accelerometer noise density in micro-g/sqrt(Hz).
    fs : float
        Sampling rate in Hz.

    Returns
    -------
    sigma_w2 : float
        Gyro variance in (deg/s)^2.
    sigma_a2 : float
        Accelerometer variance in (m/s^2)^2, with g taken as 9.8 m/s^2.
    """
    if not fs > 0:
        raise InvalidArgumentError(f"sampling rate must be positive, got {fs}")
    half = fs / 2.0
    sigma_w2 = density_gyro**2 * half
    sigma_a2 = (density_accel * G0 * 1e-6) ** 2 * half
    return sigma_w2, sigma_a2


def input_covariance(sigma_w2_rad, sigma_a2):
    """Diagonal 6x6 input covariance ``Q`` (gyro variance in rad^2/s^2)."""
    return np.diag([sigma_w2_rad] * 3 + [sigma_a2] * 3)


def simulate_imu(true_omega, true_accel_body, q, rng):
    """Add white Gaussian noise with diagonal covariance ``q`` to the true input."""
    u = np.concatenate([np.asarray(true_omega, float), np.asarray(true_accel_body, float)])
    q = np.asarray(q, dtype=float)
    sd = np.sqrt(np.diag(q))
    if np.any(sd < 0) or not np.all(np.isfinite(sd)):
        raise InvalidArgumentError("q must have a non-negative diagonal")
    return u + sd * rng.standard_normal(6)


def angular_accel_matrix(omega, omega_prev, T):
    """Finite-difference angular acceleration in matrix form, ``(hat(w) - hat(w_prev)) / T``."""
    return (hat(omega) - hat(omega_prev)) / T


def accel_to_centroid(a_imu, r, omega, omega_prev, T, z):
    """Move an accelerometer reading from the IMU location to the body centroid.

    ``z`` is the IMU offset from the centroid in the body frame.  The correction
    ``(R Omega^2 + R alpha) z`` includes ``R``, so it is exact when both
    accelerations are expressed in the world frame.
    """
    if not T > 0:
        raise InvalidArgumentError(f"sampling period must be positive, got {T}")
    r = np.asarray(r, dtype=float)
    om = hat(omega)
    alpha = angular_accel_matrix(omega, omega_prev, T)
    return np.asarray(a_imu, dtype=float) - (r @ om @ om + r @ alpha) @ np.asarray(z, dtype=float)


def accel_from_centroid(a_c, r, omega, omega_prev, T, z):
    """Forward lever-arm model: the reading an IMU at offset ``z`` would report."""
    r = np.asarray(r, dtype=float)
    om = hat(omega)
    alpha = angular_accel_matrix(omega, omega_prev, T)
    return np.asarray(a_c, dtype=float) + (r @ om @ om + r @ alpha) @ np.asarray(z, dtype=float)


def _product_var(mx, vx, my, vy):
    # Var(XY) for independent X, Y
    return vx * vy + vx * my**2 + vy * mx**2


def _omega_sq_stats(omega, var_w):
    """Elementwise mean and variance of ``hat(w) @ hat(w)`` for independent w_i ~ N(omega_i, var_w)."""
    w = np.asarray(omega, dtype=float)
    sq_mean = var_w + w**2
    sq_var = 2.0 * var_w**2 + 4.0 * w**2 * var_w
    mean = np.outer(w, w)
    var = _product_var(w[:, None], var_w, w[None, :], var_w)
    for i in range(3):
        j, k = [m for m in range(3) if m != i]
        mean[i, i] = -(sq_mean[j] + sq_mean[k])
        var[i, i] = sq_var[j] + sq_var[k]
    return mean, var


def _lever_term_var(r_mean, r_var, m_mean, m_var, z):
    # Var of the i-th element of R M z, summing independent product terms
    terms = _product_var(r_mean[:, :, None], r_var[:, :, None], m_mean[None, :, :], m_var[None, :, :])
    return np.einsum("ijk,k->i", terms, np.asarray(z, dtype=float) ** 2)


def accel_variance_to_centroid(var_a_imu, r, var_r, omega, var_w, T, z, omega_prev=None):
    """Per-axis variance of the centroid acceleration returned by :func:`accel_to_centroid`.

    The three contributions (IMU noise, centripetal term, angular-acceleration
    term) are added as if independent, and every product ``r_ij * m_jk`` is
    treated as a product of independent variables.

    Parameters
    ----------
    var_a_imu : array_like, shape (3,)
        Accelerometer variance per axis.
    r : array_like, shape (3, 3)
        Mean rotation.
    var_r : array_like, shape (9,) or (3, 3)
        Variance of each entry of ``r``; a 9-vector is read column-major.
    omega : array_like, shape (3,)
        Mean angular velocity (rad/s).
    var_w : float
        Gyro variance per axis (rad^2/s^2).
    T : float
        Sampling period; the angular acceleration differences two gyro samples.
    z : array_like, shape (3,)
        Lever arm (IMU minus centroid) in the body frame.
    omega_prev : array_like, shape (3,), optional
        Mean of the previous gyro sample; defaults to ``omega``.
    """
    if not T > 0:
        raise InvalidArgumentError(f"sampling period must be positive, got {T}")
    r = np.asarray(r, dtype=float)
    var_r = np.asarray(var_r, dtype=float)
    if var_r.shape == (9,):
        var_r = var_r.reshape(3, 3, order="F")
    if np.any(var_r < 0) or var_w < 0 or np.any(np.asarray(var_a_imu) < 0):
        raise InvalidArgumentError("variances must be non-negative")
    omega = np.asarray(omega, dtype=float)
    omega_prev = omega if omega_prev is None else np.asarray(omega_prev, dtype=float)

    sq_mean, sq_var = _omega_sq_stats(omega, var_w)
    diff_mean = hat(omega - omega_prev)
    # off-diagonal entries of hat(w - w_prev) carry twice the gyro variance
    diff_var = 2.0 * var_w * (1.0 - np.eye(3))

    centripetal = _lever_term_var(r, var_r, sq_mean, sq_var, z)
    angular = _lever_term_var(r, var_r, diff_mean, diff_var, z) / T**2
    return np.asarray(var_a_imu, dtype=float) + centripetal + angular


def simulate_ranges(tx_positions, beacons, sigma_s, rng):
    """Noisy transmitter-to-beacon ranges, clamped at zero."""
    if sigma_s < 0:
        raise InvalidArgumentError("sigma_s must be non-negative")
    tx = np.asarray(tx_positions, dtype=float).reshape(3, 3)
    b = beacons.b if isinstance(beacons, BeaconMap) else np.asarray(beacons, dtype=float)
    true = np.linalg.norm(b[:, None, :] - tx[None, :, :], axis=2)
    noisy = true + sigma_s * rng.standard_normal(true.shape)
    return RangeSet(np.maximum(noisy, 0.0), float(sigma_s) ** 2)


def multilaterate_point(s, beacons, init, tol=GN_TOL, maxiter=GN_MAXITER):
    """Gauss-Newton fit of one point to its beacon ranges.

    Returns ``(p, iterations, converged)``.
    """
    b = beacons.b if isinstance(beacons, BeaconMap) else np.asarray(beacons, dtype=float)
    return _backend.kernels.gn_point(s, b, init, tol, maxiter)


def multilaterate(ranges, beacons, init=None):
    """Locate the three transmitters from their ranges.

    ``init`` holds one starting point per transmitter (e.g. the previous
    estimate); the beacon centroid is used when it is ``None``.

    Returns
    -------
    y_ms : ndarray, shape (9,)
        Stacked transmitter estimates.
    converged : bool
        True when every transmitter converged.
    """
    b = beacons.b if isinstance(beacons, BeaconMap) else np.asarray(beacons, dtype=float)
    s = ranges.s if isinstance(ranges, RangeSet) else np.asarray(ranges, dtype=float)
    if init is None:
        init = np.tile(b.mean(axis=0), (3, 1))
    init = np.asarray(init, dtype=float).reshape(3, 3)
    y = np.empty(9)
    ok = True
    for i in range(3):
        p, _, conv = _backend.kernels.gn_point(s[:, i], b, init[i], GN_TOL, GN_MAXITER)
        y[3 * i:3 * i + 3] = p
        ok = ok and conv
    return y, ok
