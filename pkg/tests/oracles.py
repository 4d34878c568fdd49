"""Independent reference computations used by the tests.

Nothing here imports the modules under test beyond plain data containers.
"""
import itertools

import numpy as np


def dc_flows(node_ids, lines, injections, slack):
    """Line flows by solving the reduced nodal susceptance system directly.

    ``lines`` holds ``(from, to, reactance)``; the network must be connected.
    """
    idx = {n: i for i, n in enumerate(node_ids)}
    n = len(node_ids)
    B = np.zeros((n, n))
    for a, b, x in lines:
        i, j = idx[a], idx[b]
        y = 1.0 / x
        B[i, i] += y
        B[j, j] += y
        B[i, j] -= y
        B[j, i] -= y
    s = idx[slack]
    keep = [i for i in range(n) if i != s]
    theta = np.zeros(n)
    theta[keep] = np.linalg.solve(B[np.ix_(keep, keep)], np.asarray(injections, float)[keep])
    return np.array([(theta[idx[a]] - theta[idx[b]]) / x for a, b, x in lines])


def connected(node_ids, lines):
    seen, stack = {node_ids[0]}, [node_ids[0]]
    adj = {n: set() for n in node_ids}
    for a, b, _ in lines:
        adj[a].add(b)
        adj[b].add(a)
    while stack:
        for m in adj[stack.pop()]:
            if m not in seen:
                seen.add(m)
                stack.append(m)
    return len(seen) == len(node_ids)


def polygon_vertices_brute(A, b, tol=1e-9):
    """All feasible pairwise intersections of ``A x <= b`` (2D), deduplicated and sorted."""
    A = np.asarray(A, float)
    b = np.asarray(b, float)
    pts = []
    for i, j in itertools.combinations(range(len(b)), 2):
        M = np.array([A[i], A[j]])
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, [b[i], b[j]])
        if np.all(A @ x <= b + tol * (1 + np.abs(b))):
            if not any(np.allclose(x, p, atol=1e-7) for p in pts):
                pts.append(x)
    return sorted(map(tuple, np.round(pts, 7)))


def lp_brute_force(c, A, b, lower, upper):
    """Minimum of ``c x`` s.t. ``A x <= b``, ``lower <= x <= upper`` by vertex enumeration.

    Bounds must be finite. Returns ``None`` if infeasible.
    """
    c = np.asarray(c, float)
    n = len(c)
    G = np.vstack([np.asarray(A, float).reshape(-1, n), np.eye(n), -np.eye(n)])
    h = np.concatenate([np.asarray(b, float), upper, -np.asarray(lower, float)])
    best = None
    for rows in itertools.combinations(range(len(h)), n):
        M = G[list(rows)]
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        x = np.linalg.solve(M, h[list(rows)])
        if np.all(G @ x <= h + 1e-7):
            v = float(c @ x)
            if best is None or v < best:
                best = v
    return best


def membership_disagreements(A_full, b_full, A_red, b_red, bounds, balance, n_points, rng, tol=1e-9):
    """Sample points inside the injection box and compare membership of both row sets.

    Half of the points are uniform in the box, the other half lie on random
    rays around the boundary of the reduced set, where a wrongly dropped row
    would show up.
    """
    d = A_full.shape[1]
    pts = []
    half = n_points // 2
    U = rng.uniform(-1, 1, (half, d)) * bounds
    if balance:
        U -= U.mean(axis=1, keepdims=True)
    pts.append(U)
    R = rng.normal(size=(n_points - half, d))
    if balance:
        R -= R.mean(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        AR = R @ A_red.T
        t_rows = np.where(AR > 1e-12, b_red / AR, np.inf).min(axis=1)
        t_box = np.where(np.abs(R) > 1e-12, bounds / np.abs(R), np.inf).min(axis=1)
    t = np.minimum(t_rows, t_box)
    t = np.where(np.isfinite(t), t, 1.0)
    pts.append(R * (t * rng.uniform(0.8, 1.2, len(t)))[:, None])
    X = np.vstack(pts)
    in_box = np.all(np.abs(X) <= bounds + tol, axis=1)
    bad = 0
    for s in range(0, len(X), 200):
        Xs = X[s : s + 200]
        full = np.all(Xs @ A_full.T <= b_full + tol * (1 + np.abs(b_full)), axis=1)
        red = np.all(Xs @ A_red.T <= b_red + tol * (1 + np.abs(b_red)), axis=1)
        bad += int(np.sum((full != red) & in_box[s : s + 200]))
    return bad, int(in_box.sum())
