"""Continuous/discrete state-space model of the tracked rigid body.

State layout (15): ``[vec(R) (9, column-major), p_c (3), v_c (3)]``.
Input layout (6): ``[omega (3, rad/s), a_b (3, m/s^2 body frame, gravity free)]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .exceptions import InvalidArgumentError
from .so3 import check_on_manifold, hat, unvec, vec

STATE_DIM = 15
INPUT_DIM = 6
THETA = slice(0, 9)
POS = slice(9, 12)
VEL = slice(12, 15)


@dataclass(frozen=True)
class TransmitterGeometry:
    """Isosceles triangle of transmitters with its centroid at the body origin.

    ``base`` is the triangle base ``d`` and ``altitude`` its height ``a``, both in metres.
    """

    base: float = 0.1
    altitude: float = 0.3
    points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        d, a = float(self.base), float(self.altitude)
        if not (d > 0 and a > 0):
            raise InvalidArgumentError("triangle base and altitude must be positive")
        pts = np.array(
            [[0.0, 0.0, 2.0 * a / 3.0],
             [d / 2.0, 0.0, -a / 3.0],
             [-d / 2.0, 0.0, -a / 3.0]]
        )
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)


def make_state(r, p, v):
    """Pack a rotation, position and velocity into a 15-vector."""
    x = np.empty(STATE_DIM)
    x[THETA] = vec(r)
    x[POS] = p
    x[VEL] = v
    return x


def rotation_of(x):
    return unvec(np.asarray(x)[THETA])


def build_pi(r):
    """9x3 matrix with ``Pi @ w == vec(r @ hat(w))``."""
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3):
        raise InvalidArgumentError(f"expected a 3x3 matrix, got shape {r.shape}")
    return _backend.kernels.build_pi(r)


def discrete_f(T):
    if not T > 0:
        raise InvalidArgumentError(f"sampling period must be positive, got {T}")
    f = np.eye(STATE_DIM)
    f[POS, VEL] = T * np.eye(3)
    return f


def discrete_g(x, T, check=False):
    """Input matrix of the zero-order-hold model, evaluated at state ``x``.

    ``check=True`` validates that the rotation block is on SO(3) (tolerance 1e-6).
    """
    if not T > 0:
        raise InvalidArgumentError(f"sampling period must be positive, got {T}")
    r = rotation_of(x)
    if check and not check_on_manifold(r, 1e-6):
        raise InvalidArgumentError("state rotation block is not a rotation")
    g = np.zeros((STATE_DIM, INPUT_DIM))
    g[THETA, 0:3] = T * _backend.kernels.build_pi(r)
    g[POS, 3:6] = 0.5 * T * T * r
    g[VEL, 3:6] = T * r
    return g


def propagate(x, u, T):
    """One Euclidean ZOH step, ``F x + g(x) u``.  No retraction."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    return discrete_f(T) @ x + discrete_g(x, T) @ u


def measure_h(x, geom):
    """Predicted global transmitter positions, stacked into a 9-vector."""
    x = np.asarray(x, dtype=float)
    r = rotation_of(x)
    return (x[POS] + geom.points @ r.T).reshape(9)


def measure_jacobian(geom):
    """Exact 9x15 Jacobian of :func:`measure_h`; it does not depend on the state."""
    h = np.zeros((9, STATE_DIM))
    eye = np.eye(3)
    for i, pb in enumerate(geom.points):
        h[3 * i:3 * i + 3, THETA] = np.kron(pb, eye)
        h[3 * i:3 * i + 3, POS] = eye
    return h


def omega_matrix_step(r, w, T):
    """Matrix form of the orientation step, ``r + T r hat(w)``."""
    r = np.asarray(r, dtype=float)
    return r + T * r @ hat(w)
