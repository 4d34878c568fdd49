# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. ``_kernels_py`` holds the numpy twins with identical semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, INFINITY

cnp.import_array()


def first_hits(const double[:, ::1] AR, const double[::1] slack, double eps):
    """Per column of ``AR``: first row hit by the ray, its step and the runner-up step."""
    cdef Py_ssize_t m = AR.shape[0], k = AR.shape[1], i, j
    cdef cnp.ndarray[cnp.int64_t, ndim=1] idx = np.full(k, -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] tmin = np.full(k, np.inf)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] tsec = np.full(k, np.inf)
    cdef double t, v
    cdef double[::1] best = tmin, second = tsec
    cdef cnp.int64_t[::1] arg = idx
    for i in range(m):
        for j in range(k):
            v = AR[i, j]
            if v > eps:
                t = slack[i] / v
                if t < best[j]:
                    second[j] = best[j]
                    best[j] = t
                    arg[j] = i
                elif t < second[j]:
                    second[j] = t
    return idx, tmin, tsec


DEF HARRIS = 1e-9


def ratio_test(const double[::1] xb, const double[::1] lb, const double[::1] ub,
               const double[::1] delta, double ptol, const cnp.int64_t[::1] basis, bint bland):
    """Bounded primal ratio test for ``xb - theta * delta``; returns (row, theta).

    Two passes (Harris): the step limit is taken with bounds relaxed by a
    small feasibility tolerance, then the largest pivot within that limit
    leaves the basis (smallest basis index under Bland's rule).
    """
    cdef Py_ssize_t m = xb.shape[0], i, r = -1
    cdef double theta = INFINITY, t, d, piv = -1.0
    for i in range(m):
        t = _step(xb[i], lb[i], ub[i], delta[i], ptol, HARRIS)
        if t < theta:
            theta = t
    if theta == INFINITY:
        return -1, INFINITY
    for i in range(m):
        t = _step(xb[i], lb[i], ub[i], delta[i], ptol, 0.0)
        if t > theta:
            continue
        d = fabs(delta[i])
        if r < 0:
            r = i
            piv = d
        elif bland:
            if basis[i] < basis[r]:
                r = i
        elif d > piv:
            r = i
            piv = d
    return r, _step(xb[r], lb[r], ub[r], delta[r], ptol, 0.0)


cdef inline double _step(double x, double lo, double hi, double d, double ptol, double relax) nogil:
    cdef double t
    if d > ptol:
        if lo == -INFINITY:
            return INFINITY
        t = (x - lo + relax * (1.0 + fabs(lo))) / d
    elif d < -ptol:
        if hi == INFINITY:
            return INFINITY
        t = (hi - x + relax * (1.0 + fabs(hi))) / (-d)
    else:
        return INFINITY
    return t if t > 0.0 else 0.0


def dual_ratio_test(const double[::1] d, const double[::1] alpha, const signed char[::1] state,
                    double sign, double ptol, bint bland):
    """Entering column for the dual simplex; ``state`` is 0 lower, 1 upper, 2 free, -1 not eligible.

    Harris two-pass selection as in :func:`ratio_test`.
    """
    cdef Py_ssize_t n = d.shape[0], j, q = -1
    cdef double best = INFINITY, ratio, piv = -1.0
    for j in range(n):
        if _dual_ok(state[j], sign * alpha[j], ptol):
            ratio = (fabs(d[j]) + HARRIS) / fabs(alpha[j])
            if ratio < best:
                best = ratio
    if best == INFINITY:
        return -1
    for j in range(n):
        if not _dual_ok(state[j], sign * alpha[j], ptol):
            continue
        if fabs(d[j]) / fabs(alpha[j]) > best:
            continue
        if q < 0:
            q = j
            piv = fabs(alpha[j])
            if bland:
                break
        elif fabs(alpha[j]) > piv:
            q = j
            piv = fabs(alpha[j])
    return q


cdef inline bint _dual_ok(signed char st, double sa, double ptol) nogil:
    if st == 0:
        return sa < -ptol
    if st == 1:
        return sa > ptol
    if st == 2:
        return fabs(sa) > ptol
    return False


def polygon_vertices(const double[:, ::1] A, const double[::1] b, double tol):
    """All pairwise line intersections of the 2D halfspaces ``A x <= b`` that satisfy every halfspace."""
    cdef Py_ssize_t m = A.shape[0], i, j, k, n = 0
    cdef double det, x, y, scale
    cdef bint ok
    pts = []
    pairs = []
    for i in range(m):
        for j in range(i + 1, m):
            det = A[i, 0] * A[j, 1] - A[i, 1] * A[j, 0]
            scale = (fabs(A[i, 0]) + fabs(A[i, 1])) * (fabs(A[j, 0]) + fabs(A[j, 1]))
            if fabs(det) <= 1e-12 * scale:
                continue
            x = (b[i] * A[j, 1] - A[i, 1] * b[j]) / det
            y = (A[i, 0] * b[j] - b[i] * A[j, 0]) / det
            ok = True
            for k in range(m):
                if A[k, 0] * x + A[k, 1] * y > b[k] + tol * (1.0 + fabs(b[k])):
                    ok = False
                    break
            if ok:
                pts.append((x, y))
                pairs.append((i, j))
    if not pts:
        return np.zeros((0, 2)), np.zeros((0, 2), dtype=np.int64)
    return np.asarray(pts, dtype=np.float64), np.asarray(pairs, dtype=np.int64)
