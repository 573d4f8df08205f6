"""Pure NumPy implementations of the hot kernels.

The Cython module ``_ckernels`` exposes the same four functions with the same
signatures; ``_backend`` picks one at import time.
"""
from __future__ import annotations

import numpy as np

from .exceptions import SingularRetractionError

NAME = "python"

_RANK_TOL = 1e-12
# det/(trace/3)^3 below this counts as ill-conditioned normal equations
_ILL_COND = 1e-10


def qfactor(a):
    """Q-factor of a 3x3 matrix with the diagonal of R forced positive."""
    a = np.asarray(a, dtype=float)
    scale = max(np.abs(a).max(), 1.0)
    q, r = np.linalg.qr(a)
    d = np.diag(r).copy()
    if np.any(np.abs(d) <= _RANK_TOL * scale):
        raise SingularRetractionError("matrix is rank deficient")
    if np.linalg.det(a) <= 0.0:
        raise SingularRetractionError("matrix has non-positive determinant")
    return q * np.sign(d)


def build_pi(r):
    r = np.asarray(r, dtype=float)
    pi = np.zeros((9, 3))
    # column j of R*hat(w) is w x-products of the other two columns
    pi[0:3, 1] = -r[:, 2]
    pi[0:3, 2] = r[:, 1]
    pi[3:6, 0] = r[:, 2]
    pi[3:6, 2] = -r[:, 0]
    pi[6:9, 0] = -r[:, 1]
    pi[6:9, 1] = r[:, 0]
    return pi


def transport_vectors(vecs, x, y):
    """Skew-project each column (a column-major 3x3 matrix) at ``x`` and move it to ``y``."""
    vecs = np.asarray(vecs, dtype=float)
    n = vecs.shape[1]
    mats = vecs.T.reshape(n, 3, 3).transpose(0, 2, 1)
    om = np.einsum("ji,njk->nik", x, mats)
    om = 0.5 * (om - om.transpose(0, 2, 1))
    moved = np.einsum("ij,njk->nik", y, om)
    return moved.transpose(0, 2, 1).reshape(n, 9).T.copy()


def gn_point(s, beacons, init, tol, maxiter):
    """Gauss-Newton range fit for one point.

    Returns ``(p, iterations, converged)``.
    """
    s = np.asarray(s, dtype=float)
    b = np.asarray(beacons, dtype=float)
    p = np.array(init, dtype=float)
    for it in range(1, maxiter + 1):
        d = p - b
        rng = np.sqrt(np.einsum("ij,ij->i", d, d))
        rng = np.maximum(rng, 1e-12)
        f = rng - s
        jac = d / rng[:, None]
        jtj = jac.T @ jac
        g = jac.T @ f
        tr = np.trace(jtj)
        if np.linalg.det(jtj) < _ILL_COND * (tr / 3.0) ** 3:
            jtj = jtj + (1e-6 * tr / 3.0) * np.eye(3)
        try:
            step = -np.linalg.solve(jtj, g)
        except np.linalg.LinAlgError:
            return p, it, False
        p = p + step
        if not np.all(np.isfinite(p)):
            return p - step, it, False
        if np.sqrt(step @ step) < tol:
            return p, it, True
    return p, maxiter, False
