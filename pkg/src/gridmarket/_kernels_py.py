"""Numpy implementations of the compiled kernels in ``_kernels.pyx``."""
import numpy as np


def first_hits(AR, slack, eps):
    AR = np.asarray(AR, dtype=float)
    k = AR.shape[1]
    if AR.shape[0] == 0:
        return np.full(k, -1, dtype=np.int64), np.full(k, np.inf), np.full(k, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(AR > eps, np.asarray(slack)[:, None] / AR, np.inf)
    idx = np.argmin(t, axis=0)
    cols = np.arange(k)
    tmin = t[idx, cols]
    t[idx, cols] = np.inf
    tsec = t.min(axis=0)
    idx = np.where(np.isfinite(tmin), idx, -1).astype(np.int64)
    return idx, tmin, tsec


HARRIS = 1e-9


def _steps(xb, lb, ub, delta, ptol, relax):
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.full(len(xb), np.inf)
        dec = (delta > ptol) & np.isfinite(lb)
        inc = (delta < -ptol) & np.isfinite(ub)
        t[dec] = (xb[dec] - lb[dec] + relax * (1.0 + np.abs(lb[dec]))) / delta[dec]
        t[inc] = (ub[inc] - xb[inc] + relax * (1.0 + np.abs(ub[inc]))) / (-delta[inc])
    return np.maximum(t, 0.0)


def ratio_test(xb, lb, ub, delta, ptol, basis, bland):
    theta = _steps(xb, lb, ub, delta, ptol, HARRIS).min(initial=np.inf)
    if not np.isfinite(theta):
        return -1, np.inf
    t = _steps(xb, lb, ub, delta, ptol, 0.0)
    ties = np.flatnonzero(t <= theta)
    if bland:
        r = ties[np.argmin(np.asarray(basis)[ties])]
    else:
        r = ties[np.argmax(np.abs(delta[ties]))]
    return int(r), float(t[r])


def dual_ratio_test(d, alpha, state, sign, ptol, bland):
    state = np.asarray(state)
    sa = sign * alpha
    ok = ((state == 0) & (sa < -ptol)) | ((state == 1) & (sa > ptol)) | ((state == 2) & (np.abs(sa) > ptol))
    cand = np.flatnonzero(ok)
    if len(cand) == 0:
        return -1
    best = ((np.abs(d[cand]) + HARRIS) / np.abs(alpha[cand])).min()
    ties = cand[np.abs(d[cand]) / np.abs(alpha[cand]) <= best]
    if bland:
        return int(ties[0])
    return int(ties[np.argmax(np.abs(alpha[ties]))])


def polygon_vertices(A, b, tol):
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m = len(b)
    if m < 2:
        return np.zeros((0, 2)), np.zeros((0, 2), dtype=np.int64)
    i, j = np.triu_indices(m, 1)
    det = A[i, 0] * A[j, 1] - A[i, 1] * A[j, 0]
    scale = np.abs(A[i]).sum(axis=1) * np.abs(A[j]).sum(axis=1)
    keep = np.abs(det) > 1e-12 * scale
    i, j, det = i[keep], j[keep], det[keep]
    x = (b[i] * A[j, 1] - A[i, 1] * b[j]) / det
    y = (A[i, 0] * b[j] - b[i] * A[j, 0]) / det
    pts = np.column_stack([x, y])
    ok = np.all(pts @ A.T <= b + tol * (1.0 + np.abs(b)), axis=1)
    return pts[ok], np.column_stack([i[ok], j[ok]]).astype(np.int64)
