# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, isfinite

from .exceptions import SingularRetractionError

cnp.import_array()

NAME = "cython"

cdef double _RANK_TOL = 1e-12
cdef double _ILL_COND = 1e-10


cdef inline double _det3(double[:, ::1] a) noexcept nogil:
    return (a[0, 0] * (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1])
            - a[0, 1] * (a[1, 0] * a[2, 2] - a[1, 2] * a[2, 0])
            + a[0, 2] * (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0]))


def qfactor(a_in):
    """Q-factor of a 3x3 matrix with positive R-diagonal (Gram-Schmidt, two passes)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] q = np.array(a_in, dtype=np.float64, order="C", copy=True)
    cdef double[:, ::1] qv = q
    cdef double scale = 1.0, rjj, dot
    cdef int i, j, k, rep
    for i in range(3):
        for j in range(3):
            if fabs(qv[i, j]) > scale:
                scale = fabs(qv[i, j])
    if _det3(qv) <= 0.0:
        raise SingularRetractionError("matrix has non-positive determinant")
    for j in range(3):
        for rep in range(2):
            for k in range(j):
                dot = 0.0
                for i in range(3):
                    dot += qv[i, k] * qv[i, j]
                for i in range(3):
                    qv[i, j] -= dot * qv[i, k]
        rjj = 0.0
        for i in range(3):
            rjj += qv[i, j] * qv[i, j]
        rjj = sqrt(rjj)
        if rjj <= _RANK_TOL * scale:
            raise SingularRetractionError("matrix is rank deficient")
        for i in range(3):
            qv[i, j] /= rjj
    return q


def build_pi(r_in):
    cdef const double[:, ::1] r = np.ascontiguousarray(r_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] pi = np.zeros((9, 3))
    cdef double[:, ::1] p = pi
    cdef int i
    for i in range(3):
        p[i, 1] = -r[i, 2]
        p[i, 2] = r[i, 1]
        p[3 + i, 0] = r[i, 2]
        p[3 + i, 2] = -r[i, 0]
        p[6 + i, 0] = -r[i, 1]
        p[6 + i, 1] = r[i, 0]
    return pi


def transport_vectors(vecs_in, x_in, y_in):
    """Skew-project each column (a column-major 3x3 matrix) at ``x`` and move it to ``y``."""
    cdef const double[:, ::1] v = np.ascontiguousarray(vecs_in, dtype=np.float64)
    cdef const double[:, ::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef const double[:, ::1] y = np.ascontiguousarray(y_in, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out_arr = np.empty((9, n))
    cdef double[:, ::1] out = out_arr
    cdef double a[3][3]
    cdef double m[3][3]
    cdef double om[3][3]
    cdef Py_ssize_t c
    cdef int i, j, k
    cdef double acc
    for c in range(n):
        for j in range(3):
            for i in range(3):
                a[i][j] = v[3 * j + i, c]
        for i in range(3):
            for k in range(3):
                acc = 0.0
                for j in range(3):
                    acc += x[j, i] * a[j][k]
                m[i][k] = acc
        for i in range(3):
            for k in range(3):
                om[i][k] = 0.5 * (m[i][k] - m[k][i])
        for i in range(3):
            for k in range(3):
                acc = 0.0
                for j in range(3):
                    acc += y[i, j] * om[j][k]
                out[3 * k + i, c] = acc
    return out_arr


cdef int _solve3(double a[3][3], double b[3], double out[3]) noexcept nogil:
    cdef double det = (a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
                       - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                       + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]))
    if det == 0.0 or not isfinite(det):
        return -1
    out[0] = (b[0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
              - a[0][1] * (b[1] * a[2][2] - a[1][2] * b[2])
              + a[0][2] * (b[1] * a[2][1] - a[1][1] * b[2])) / det
    out[1] = (a[0][0] * (b[1] * a[2][2] - a[1][2] * b[2])
              - b[0] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
              + a[0][2] * (a[1][0] * b[2] - b[1] * a[2][0])) / det
    out[2] = (a[0][0] * (a[1][1] * b[2] - b[1] * a[2][1])
              - a[0][1] * (a[1][0] * b[2] - b[1] * a[2][0])
              + b[0] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])) / det
    return 0


def gn_point(s_in, beacons_in, init, double tol, int maxiter):
    """Gauss-Newton range fit for one point; returns ``(p, iterations, converged)``."""
    cdef const double[::1] s = np.ascontiguousarray(s_in, dtype=np.float64)
    cdef const double[:, ::1] b = np.ascontiguousarray(beacons_in, dtype=np.float64)
    cdef Py_ssize_t m = b.shape[0]
    cdef double p[3]
    cdef double prev[3]
    cdef double d[3]
    cdef double jtj[3][3]
    cdef double g[3]
    cdef double step[3]
    cdef double rng, f, tr, det, nrm
    cdef Py_ssize_t j
    cdef int i, k, it
    cdef bint ok = False
    p0 = np.asarray(init, dtype=np.float64)
    for i in range(3):
        p[i] = p0[i]
    it = 0
    while it < maxiter:
        it += 1
        for i in range(3):
            g[i] = 0.0
            for k in range(3):
                jtj[i][k] = 0.0
        for j in range(m):
            rng = 0.0
            for i in range(3):
                d[i] = p[i] - b[j, i]
                rng += d[i] * d[i]
            rng = sqrt(rng)
            if rng < 1e-12:
                rng = 1e-12
            f = rng - s[j]
            for i in range(3):
                d[i] /= rng
                g[i] += d[i] * f
            for i in range(3):
                for k in range(3):
                    jtj[i][k] += d[i] * d[k]
        tr = jtj[0][0] + jtj[1][1] + jtj[2][2]
        det = (jtj[0][0] * (jtj[1][1] * jtj[2][2] - jtj[1][2] * jtj[2][1])
               - jtj[0][1] * (jtj[1][0] * jtj[2][2] - jtj[1][2] * jtj[2][0])
               + jtj[0][2] * (jtj[1][0] * jtj[2][1] - jtj[1][1] * jtj[2][0]))
        if det < _ILL_COND * (tr / 3.0) ** 3:
            for i in range(3):
                jtj[i][i] += 1e-6 * tr / 3.0
        for i in range(3):
            g[i] = -g[i]
        if _solve3(jtj, g, step) != 0:
            break
        nrm = 0.0
        for i in range(3):
            prev[i] = p[i]
            p[i] += step[i]
            nrm += step[i] * step[i]
        if not (isfinite(p[0]) and isfinite(p[1]) and isfinite(p[2])):
            for i in range(3):
                p[i] = prev[i]
            break
        if sqrt(nrm) < tol:
            ok = True
            break
    return np.array([p[0], p[1], p[2]]), it, ok
