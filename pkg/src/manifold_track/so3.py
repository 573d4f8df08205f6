"""Tools on the rotation group SO(3).

Rotations are plain ``(3, 3)`` float arrays.  Tangent vectors at ``X`` are
``(3, 3)`` arrays of the form ``X @ Omega`` with ``Omega`` skew symmetric.
Orientation covariances act on the column-major vectorization ``vec(X)``.
"""
from __future__ import annotations

import numpy as np

from . import _backend
from .exceptions import InvalidArgumentError, NumericalError

SKEW_TOL = 1e-10
MANIFOLD_TOL = 1e-9


def vec(m):
    """Column-major flattening of a 3x3 matrix."""
    return np.asarray(m, dtype=float).reshape(9, order="F")


def unvec(theta):
    """Inverse of :func:`vec`."""
    return np.asarray(theta, dtype=float).reshape(3, 3, order="F")


def hat(w):
    """Skew matrix of ``w`` so that ``hat(w) @ u == np.cross(w, u)``."""
    w = np.asarray(w, dtype=float)
    if w.shape != (3,):
        raise InvalidArgumentError(f"expected a 3-vector, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise InvalidArgumentError("hat() needs finite components")
    return np.array(
        [[0.0, -w[2], w[1]],
         [w[2], 0.0, -w[0]],
         [-w[1], w[0], 0.0]]
    )


def vee(s, tol=SKEW_TOL):
    """Inverse of :func:`hat`; rejects matrices that are not skew within ``tol``."""
    s = np.asarray(s, dtype=float)
    if s.shape != (3, 3):
        raise InvalidArgumentError(f"expected a 3x3 matrix, got shape {s.shape}")
    if np.abs(s + s.T).max() > tol:
        raise InvalidArgumentError("matrix is not skew symmetric")
    return np.array([s[2, 1], s[0, 2], s[1, 0]])


def skew_project(m):
    """Frobenius-nearest skew-symmetric matrix, ``(m - m.T) / 2``."""
    m = np.asarray(m, dtype=float)
    return 0.5 * (m - m.T)


def log_map(r):
    """Rotation vector ``w`` with ``expm(hat(w)) == r`` (angle in ``[0, pi]``)."""
    r = np.asarray(r, dtype=float)
    axis2s = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    angle = np.arctan2(np.linalg.norm(axis2s), np.trace(r) - 1.0)
    if angle < 1e-6:
        return 0.5 * axis2s
    if np.pi - angle > 1e-4:
        return axis2s * (angle / (2.0 * np.sin(angle)))
    # near pi the antisymmetric part vanishes; read the axis from the symmetric part
    c = np.cos(angle)
    b = 0.5 * (r + r.T) - c * np.eye(3)
    i = int(np.argmax(np.diag(b)))
    axis = b[:, i] / np.sqrt(b[i, i])
    if axis2s @ axis < 0:
        axis = -axis
    return angle * axis / np.linalg.norm(axis)


def check_on_manifold(x, tol=MANIFOLD_TOL):
    """True when ``||x.T x - I||_F <= tol`` and ``det(x) > 0``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (3, 3) or not np.all(np.isfinite(x)):
        return False
    resid = x.T @ x - np.eye(3)
    return bool(np.linalg.norm(resid) <= tol and np.linalg.det(x) > 0.0)


def retract(x, v):
    """QR retraction: the Q-factor of ``x + v`` with positive R-diagonal.

    ``v`` does not have to be tangent at ``x``; the factorization absorbs any
    normal component.

    Raises
    ------
    SingularRetractionError
        If ``x + v`` is rank deficient or has non-positive determinant.
    """
    a = np.asarray(x, dtype=float) + np.asarray(v, dtype=float)
    if not np.all(np.isfinite(a)):
        raise InvalidArgumentError("retract() needs finite input")
    return _backend.kernels.qfactor(a)


def vector_transport(x, y, v):
    """Move a tangent vector ``v = x @ Omega`` at ``x`` to ``y @ Omega`` at ``y``.

    ``Omega`` is taken as the skew part of ``x.T @ v``, so slightly
    non-tangent input is projected first.
    """
    x = np.asarray(x, dtype=float)
    return np.asarray(y, dtype=float) @ skew_project(x.T @ np.asarray(v, dtype=float))


def transport_covariance(p, x, y):
    """Carry a 9x9 orientation covariance from the tangent space at ``x`` to ``y``.

    The covariance is eigendecomposed; each eigenvector is read as a
    column-major 3x3 matrix, projected to the tangent space at ``x``,
    transported to ``y`` and recombined with the unchanged eigenvalues.
    Directions normal to the manifold are dropped by the projection.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (9, 9):
        raise InvalidArgumentError(f"expected a 9x9 covariance, got shape {p.shape}")
    if np.abs(p - p.T).max() > 1e-8 * max(1.0, np.abs(p).max()):
        raise InvalidArgumentError("covariance is not symmetric")
    try:
        lam, vecs = np.linalg.eigh(0.5 * (p + p.T))
    except np.linalg.LinAlgError as exc:
        raise NumericalError("eigendecomposition failed") from exc
    moved = _backend.kernels.transport_vectors(vecs, x, y)
    out = (moved * lam) @ moved.T
    return 0.5 * (out + out.T)


def _is_chol(a):
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return False
    return True


def nearest_spd(a, max_iter=100):
    """Nearest symmetric positive definite matrix (Higham 1988 style).

    Symmetrize, average with the symmetric polar factor, then add a growing
    diagonal jitter ``(1 + k) * eps * ||A||_F`` until Cholesky succeeds.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidArgumentError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidArgumentError("nearest_spd() needs finite entries")
    b = 0.5 * (a + a.T)
    if _is_chol(b):
        return b
    _, s, vt = np.linalg.svd(b)
    h = (vt.T * s) @ vt
    ahat = 0.5 * (b + h)
    ahat = 0.5 * (ahat + ahat.T)
    scale = np.linalg.norm(a)
    if scale == 0.0:
        scale = 1.0
    eye = np.eye(a.shape[0])
    eps = np.finfo(float).eps
    for k in range(max_iter):
        if _is_chol(ahat):
            return ahat
        ahat = ahat + (1 + k) * eps * scale * eye
    if _is_chol(ahat):
        return ahat
    raise NumericalError(f"nearest_spd: no Cholesky factor after {max_iter} jitter steps")
