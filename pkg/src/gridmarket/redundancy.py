"""Redundant-row elimination for ``{x : A x <= b, lower <= x <= upper, [sum x = 0]}``.

The procedure keeps every row that supports a facet of the region and drops
the rest:

1. presolve: zero rows, rows implied by the bounds (and the balance
   equality) alone, and duplicate rows;
2. a strict interior point ``z``;
3. ray shooting from ``z``: the first row hit along a ray, if hit strictly
   before every other row and bound, supports a facet;
4. one LP per undecided row against the growing essential set. An optimum
   at or below ``b_i`` proves the row redundant. Otherwise the LP point lies
   outside row ``i``; the first row crossed on the segment from ``z`` to that
   point is essential and joins the set before the test is repeated.

The LPs share one warm-started :class:`~gridmarket.solver.DenseSimplex`.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gridmarket import kernels
from gridmarket.solver.simplex import CUTOFF, INFEASIBLE, OPTIMAL, UNBOUNDED, DenseSimplex

log = logging.getLogger(__name__)

TOL = 1e-6
_TIE = 1e-9
_RAY_BLOCK = 1024
_POOL = 32
_MAX_RAYS = 4000


class RedundancyError(ValueError):
    """Infeasible polytope or an unbounded test LP."""


@dataclass
class Polytope:
    A: np.ndarray
    b: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    balance: bool = False

    def __post_init__(self):
        self.A = np.array(self.A, dtype=float, ndmin=2)
        self.b = np.array(self.b, dtype=float).reshape(-1)
        m, d = self.A.shape
        if m < 1:
            raise ValueError("polytope needs at least one row")
        if len(self.b) != m:
            raise ValueError(f"A has {m} rows but b has {len(self.b)} entries")
        self.lower = np.full(d, -np.inf) if self.lower is None else np.broadcast_to(np.asarray(self.lower, float), (d,)).copy()
        self.upper = np.full(d, np.inf) if self.upper is None else np.broadcast_to(np.asarray(self.upper, float), (d,)).copy()
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound above upper bound")

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def d(self):
        return self.A.shape[1]

    def subset(self, rows):
        return Polytope(self.A[rows], self.b[rows], self.lower, self.upper, self.balance)


@dataclass
class EssentialSet:
    indices: np.ndarray
    tol: float
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        self.indices = np.unique(np.asarray(self.indices, dtype=np.int64))

    def __len__(self):
        return len(self.indices)


def contains(polytope: Polytope, x, tol=TOL):
    """Membership within ``tol``; ``x`` may be one point or an array of points (rows)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    ok = np.all(X @ polytope.A.T <= polytope.b + tol, axis=1)
    ok &= np.all(X >= polytope.lower - tol, axis=1) & np.all(X <= polytope.upper + tol, axis=1)
    if polytope.balance:
        ok &= np.abs(X.sum(axis=1)) <= tol
    return bool(ok[0]) if single else ok


def _rows(polytope):
    """Rows used internally: projected onto ``sum x = 0`` when the balance holds."""
    A = polytope.A
    if polytope.balance:
        A = A - A.mean(axis=1, keepdims=True)
    return A


def _box_max(W, lo, hi, balance):
    """``max w.x`` over the box, intersected with ``sum x = 0`` if ``balance``.

    With the balance the problem is a fractional knapsack; its Lagrangian
    ``min_lam sum_j max((w_j - lam) lo_j, (w_j - lam) hi_j)`` is piecewise
    linear with breakpoints at the ``w_j``.
    """
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        out = np.full(len(W), np.inf)
        if not balance:
            with np.errstate(invalid="ignore"):
                v = np.where(W > 0, W * hi, np.where(W < 0, W * lo, 0.0))
            out = v.sum(axis=1)
        return out
    if not balance:
        return np.maximum(W * lo, W * hi).sum(axis=1)
    if lo.sum() > 1e-12 or hi.sum() < -1e-12:
        return np.full(len(W), -np.inf)  # box misses the balance plane
    order = np.argsort(W, axis=1, kind="stable")
    ws = np.take_along_axis(W, order, axis=1)
    los, his = lo[order], hi[order]
    # slope just right of breakpoint k: -sum_{j<=k} lo_j - sum_{j>k} hi_j
    slope = -np.cumsum(los, axis=1) - (his.sum(axis=1, keepdims=True) - np.cumsum(his, axis=1))
    k = np.argmax(slope >= 0, axis=1)
    lam = ws[np.arange(len(W)), k]
    shifted = W - lam[:, None]
    return np.maximum(shifted * lo, shifted * hi).sum(axis=1)


class _TestLp:
    """``min c.x`` over bounds, balance and a growing list of ``a.x <= b`` rows."""

    def __init__(self, d, lower, upper, balance, rows=(), rhs=()):
        base = []
        b0 = []
        if balance:
            base.append(np.ones(d))
            b0.append(0.0)
        self.dummy = not base
        if self.dummy:
            base.append(np.zeros(d))
            b0.append(0.0)
        self.sx = DenseSimplex(np.array(base), np.array(b0), np.zeros(d), lower, upper)
        self.d = d
        self.balance = balance
        self.calls = 0
        self.rows = []
        self.rhs = []
        for a, r in zip(rows, rhs):
            self.add(a, r)

    def add(self, a, rhs):
        self.sx.add_row(a, rhs)
        self.rows.append(np.asarray(a, float))
        self.rhs.append(float(rhs))

    def certificate(self):
        """Multipliers of the last optimal ``maximize`` as ``(g, c0)``.

        For every row ``a`` and every ``x`` in the region,
        ``a.x <= c0 + max over the box of (a - g).x``.
        """
        y = -self.sx.duals()
        lam = y[0] if self.balance else 0.0
        y = np.clip(y[1:], 0.0, None)
        if not len(y):
            return np.full(self.d, lam), 0.0
        R = np.array(self.rows)
        return R.T @ y + lam, float(np.dot(y, self.rhs))

    def maximize(self, a, cutoff=None):
        self.sx.set_objective(-np.asarray(a, float))
        self.calls += 1
        stop = None if cutoff is None else -cutoff
        status = self.sx.solve(stop_below=stop)
        return status, self.sx.x[: self.d].copy()


class _DualTestLp:
    """Row tests solved through the LP dual, warm-started across rows.

    For the region ``W_E x <= b_E``, box and optional balance, the bound
    ``max a.x`` equals ``min b_E.y + hi.u - lo.v`` subject to
    ``W_E^T y + u - v + lam 1 = a`` with ``y, u, v >= 0``. The basis has one
    entry per coordinate. A new test row only moves the right-hand side
    (dual simplex); a new essential row is a new column (primal simplex).
    The simplex multipliers of the dual are a point of the region.
    """

    def __init__(self, d, lower, upper, balance, rows=(), rhs=()):
        eye = np.eye(d)
        cols = [eye, -eye]
        cost = [upper, -lower]
        lo = np.zeros(2 * d)
        hi = np.full(2 * d, np.inf)
        if balance:
            cols.append(np.ones((d, 1)))
            cost.append([0.0])
            lo = np.append(lo, -np.inf)
            hi = np.append(hi, np.inf)
        self.sx = DenseSimplex(np.hstack(cols), np.zeros(d), np.concatenate(cost), lo, hi)
        self.d = d
        self.balance = balance
        self.calls = 0
        self.cols = []
        self.rows = []
        self.rhs = []
        for a, r in zip(rows, rhs):
            self.add(a, r)

    def add(self, a, rhs):
        self.cols.append(self.sx.add_column(a, rhs))
        self.rows.append(np.asarray(a, float))
        self.rhs.append(float(rhs))

    def maximize(self, a, cutoff=None):
        self.calls += 1
        if self.sx.phase_one_done:
            self.sx.set_rhs(a)
        else:
            self.sx.b = np.asarray(a, dtype=float).copy()
            self.sx._restart()
        status = self.sx.solve(stop_above=cutoff)
        if status == INFEASIBLE:
            return UNBOUNDED, None
        if status == UNBOUNDED:
            return INFEASIBLE, None
        return status, self.sx.duals()

    def certificate(self):
        y = np.clip(self.sx.x[self.cols], 0.0, None) if self.cols else np.zeros(0)
        lam = self.sx.x[2 * self.d] if self.balance else 0.0
        if not len(y):
            return np.full(self.d, lam), 0.0
        return np.array(self.rows).T @ y + lam, float(np.dot(y, self.rhs))


def test_row_redundant(polytope: Polytope, i, active, tol=TOL) -> bool:
    """Solve ``max a_i.x`` over the rows in ``active`` (without ``i``), bounds and balance.

    Returns ``True`` when the optimum stays within ``b_i + tol (1 + |b_i|)``.

    Examples
    --------
    >>> p = Polytope([[1.0], [1.0]], [1.0, 2.0], lower=-10, upper=10)
    >>> test_row_redundant(p, 1, [0]), test_row_redundant(p, 0, [1])
    (True, False)
    """
    W = _rows(polytope)
    rows = [k for k in sorted(set(int(k) for k in active)) if k != i]
    lp = _TestLp(polytope.d, polytope.lower, polytope.upper, polytope.balance, W[rows], polytope.b[rows])
    status, x = lp.maximize(W[i])
    if status == UNBOUNDED:
        raise RedundancyError(f"test LP for row {i} is unbounded; bounds are missing")
    if status == INFEASIBLE:
        raise RedundancyError("polytope is infeasible")
    if status != OPTIMAL:
        raise RedundancyError(f"test LP for row {i} ended with status {status}")
    return bool(float(W[i] @ x) <= polytope.b[i] + tol * (1.0 + abs(polytope.b[i])))


def _interior_point(W, b, norms, lo, hi, balance, tol):
    """Point with positive slack on every row and bound, or ``None`` if the interior is empty."""
    d = W.shape[1]
    scale = 1.0 + np.abs(b)
    # cheap candidate: box centre, pulled onto the balance plane
    with np.errstate(invalid="ignore"):
        z = np.where(np.isfinite(lo) & np.isfinite(hi), 0.5 * (lo + hi), np.where(np.isfinite(lo), lo + 1.0, np.where(np.isfinite(hi), hi - 1.0, 0.0)))
    if balance:
        z = z - z.mean()
    inside_box = np.all(z > lo + tol) and np.all(z < hi - tol)
    if inside_box and (len(b) == 0 or np.all(b - W @ z > tol * scale)):
        return z, 0

    # max-slack LP by row generation: maximize s with a.x + |a| s <= b
    finite = np.isfinite(lo) | np.isfinite(hi)
    cap = 1.0 + np.abs(b).max(initial=0.0) + np.abs(lo[np.isfinite(lo)]).max(initial=0.0) + np.abs(hi[np.isfinite(hi)]).max(initial=0.0)
    lp = _TestLp(d + 1, np.append(lo, 0.0), np.append(hi, cap), False)
    if balance:
        lp.add(np.append(np.ones(d), 0.0), 0.0)
        lp.add(np.append(-np.ones(d), 0.0), 0.0)
    for j in np.flatnonzero(finite):
        e = np.zeros(d + 1)
        if np.isfinite(hi[j]):
            e[j], e[d] = 1.0, 1.0
            lp.add(e.copy(), hi[j])
        if np.isfinite(lo[j]):
            e[j], e[d] = -1.0, 1.0
            lp.add(e.copy(), -lo[j])
    added = np.zeros(len(b), bool)
    Ws = np.hstack([W, norms[:, None]])
    while True:
        status, x = lp.maximize(np.append(np.zeros(d), 1.0))
        if status == INFEASIBLE:
            raise RedundancyError("polytope is infeasible")
        if status != OPTIMAL:
            raise RedundancyError(f"interior point LP ended with status {status}")
        viol = (Ws @ x - b) / scale
        viol[added] = -np.inf
        worst = np.argsort(-viol)[:64]
        worst = worst[viol[worst] > 1e-9]
        if len(worst) == 0:
            break
        for j in worst:
            lp.add(Ws[j], b[j])
            added[j] = True
    s = x[d]
    if s <= tol:
        if s < -tol:
            raise RedundancyError("polytope is infeasible")
        return None, lp.calls
    return x[:d], lp.calls


def _eliminate_fixed(polytope, tol):
    """Substitute coordinates with ``lower == upper`` so the box has a strict interior.

    Row indices are preserved; with the balance the free coordinates are
    shifted so that ``sum x = 0`` still holds on them.
    """
    lo, hi = polytope.lower, polytope.upper
    fixed = (hi - lo) <= tol * (1.0 + np.abs(lo))
    if not fixed.any() or fixed.all():
        return polytope
    free = ~fixed
    value = 0.5 * (lo[fixed] + hi[fixed])
    A = polytope.A[:, free]
    b = polytope.b - polytope.A[:, fixed] @ value
    lo_f, hi_f = lo[free], hi[free]
    if polytope.balance:
        shift = np.full(free.sum(), -value.sum() / free.sum())
        b = b - A @ shift
        lo_f, hi_f = lo_f - shift, hi_f - shift
    return Polytope(A, b, lo_f, hi_f, polytope.balance)


def _bound_hit(z, R, lo, hi):
    """Ray parameter at which ``z + t r`` leaves the box, per column of ``R``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        up = np.where(R > 1e-15, (hi[:, None] - z[:, None]) / R, np.inf)
        dn = np.where(R < -1e-15, (lo[:, None] - z[:, None]) / R, np.inf)
    return np.minimum(up, dn).min(axis=0)


def _unique_first(tmin, tsec, tcap):
    return np.isfinite(tmin) & (tmin < tsec * (1.0 - _TIE)) & (tmin < tcap * (1.0 - _TIE))


def reduce(polytope: Polytope, tol=TOL, extra_rays=None, seed=0) -> EssentialSet:
    """Essential rows of ``polytope``.

    Parameters
    ----------
    polytope : Polytope
        Bounded in every direction that appears in ``A`` (via the bounds).
    tol : float
        Relative tolerance; a row is redundant when its maximum over the
        other rows stays within ``b_i + tol (1 + |b_i|)``.
    extra_rays : int, optional
        Random rays shot in addition to one ray per row normal. Defaults to
        ``min(2000, undecided rows)``.
    seed : int
        Seed for the extra ray directions (results do not depend on it;
        only the share of rows settled without an LP does).

    Returns
    -------
    EssentialSet
        Sorted row indices plus statistics.
    """
    t0 = time.perf_counter()
    polytope = _eliminate_fixed(polytope, tol)
    A, b = polytope.A, polytope.b
    lo, hi, balance = polytope.lower, polytope.upper, polytope.balance
    m, d = A.shape
    W = _rows(polytope)
    scale = 1.0 + np.abs(b)
    norms = np.linalg.norm(W, axis=1)
    state = np.zeros(m, np.int8)  # 0 undecided, 1 essential, -1 redundant
    stats = {"rows": m, "zero_rows": 0, "bound_redundant": 0, "duplicates": 0, "ray_essential": 0,
             "lp_essential": 0, "lp_redundant": 0, "rows_tested": 0, "lp_calls": 0, "fallback": False}

    zero = norms <= 1e-12 * (1.0 + np.linalg.norm(A, axis=1))
    if np.any(b[zero] < -tol * scale[zero]):
        raise RedundancyError("polytope is infeasible (a zero row has negative right-hand side)")
    state[zero] = -1
    stats["zero_rows"] = int(zero.sum())

    live = np.flatnonzero(state == 0)
    if len(live):
        top = _box_max(W[live], lo, hi, balance)
        if np.any(top == -np.inf):
            raise RedundancyError("bounds do not intersect the balance plane")
        bottom = -_box_max(-W[live], lo, hi, balance)
        if np.any(bottom > b[live] + tol * scale[live]):
            raise RedundancyError("polytope is infeasible (a row excludes the whole bounding box)")
        implied = top <= b[live] + tol * scale[live]
        state[live[implied]] = -1
        stats["bound_redundant"] = int(implied.sum())

    live = np.flatnonzero(state == 0)
    if len(live) > 1:
        u = W[live] / norms[live, None]
        beta = b[live] / norms[live]
        keys = np.round(u, 9) + 0.0
        _, group = np.unique(keys, axis=0, return_inverse=True)
        group = group.ravel()
        order = np.lexsort((live, beta, group))
        start = 0
        while start < len(order):
            stop = start + 1
            while stop < len(order) and group[order[stop]] == group[order[start]]:
                stop += 1
            if stop - start > 1:
                members = order[start:stop]
                best = beta[members[0]]
                near = members[beta[members] <= best + tol * (1.0 + abs(best))]
                keep = near[np.argmin(live[near])]
                for k in members:
                    if k != keep:
                        state[live[k]] = -1
                        stats["duplicates"] += 1
            start = stop

    live = np.flatnonzero(state == 0)
    z = None
    if len(live):
        z, calls = _interior_point(W[live], b[live], norms[live], lo, hi, balance, tol)
        stats["lp_calls"] += calls
    if z is None and len(live):
        log.warning("polytope has an empty interior; falling back to pure LP tests")
        stats["fallback"] = True
        for i in live:
            active = np.flatnonzero((state >= 0) & (np.arange(m) != i))
            stats["rows_tested"] += 1
            stats["lp_calls"] += 1
            if test_row_redundant(polytope, i, active, tol):
                state[i] = -1
                stats["lp_redundant"] += 1
            else:
                state[i] = 1
                stats["lp_essential"] += 1
        return _finish(state, tol, stats, t0)

    if len(live):
        slack = b[live] - W[live] @ z
        Wl = W[live]
        # rays along a sample of row normals plus random directions in the balance plane
        rng = np.random.default_rng(seed)
        n_extra = min(_MAX_RAYS // 2, len(live)) if extra_rays is None else int(extra_rays)
        extra = rng.standard_normal((n_extra, d))
        if balance:
            extra -= extra.mean(axis=1, keepdims=True)
        step = max(1, -(-len(live) // (_MAX_RAYS // 2)))
        dirs = np.vstack([Wl[::step], extra])
        eps = 1e-12 * norms[live].max()
        for s in range(0, len(dirs), _RAY_BLOCK):
            R = dirs[s : s + _RAY_BLOCK].T
            AR = np.ascontiguousarray(Wl @ R)
            idx, tmin, tsec = kernels.first_hits(AR, slack, eps)
            ok = _unique_first(tmin, tsec, _bound_hit(z, R, lo, hi)) & (idx >= 0)
            state[live[idx[ok]]] = 1
        stats["ray_essential"] = int((state == 1).sum())

        essential = list(np.flatnonzero(state == 1))
        lp = _DualTestLp(d, lo, hi, balance, W[essential], b[essential])
        screen = bool(np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)))
        pool = []
        stats["screened"] = 0
        slack_all = b - W @ z
        for i in np.flatnonzero(state == 0):
            if state[i] != 0:
                continue
            if len(pool) >= _POOL:
                stats["screened"] += _screen(W, b, lo, hi, tol * scale, state, pool)
                pool = []
                if state[i] != 0:
                    continue
            stats["rows_tested"] += 1
            limit = b[i] + tol * scale[i]
            while state[i] == 0:
                status, x = lp.maximize(W[i], cutoff=limit)
                if status == UNBOUNDED:
                    raise RedundancyError(f"test LP for row {i} is unbounded; bounds are missing")
                if status not in (OPTIMAL, CUTOFF):
                    raise RedundancyError(f"test LP for row {i} ended with status {status}")
                if status == OPTIMAL and W[i] @ x <= limit:
                    state[i] = -1
                    stats["lp_redundant"] += 1
                    if screen:
                        pool.append(lp.certificate())
                    break
                j = _first_crossed(W, slack_all, z, x, state, i, lo, hi, balance, seed)
                state[j] = 1
                essential.append(j)
                lp.add(W[j], b[j])
                stats["lp_essential"] += 1
        stats["lp_calls"] += lp.calls
        stats["pivots"] = lp.sx.iterations
    return _finish(state, tol, stats, t0)


def _screen(W, b, lo, hi, slack_tol, state, pool):
    """Mark undecided rows redundant when a pooled LP certificate bounds them below ``b``."""
    cand = np.flatnonzero(state == 0)
    if not len(cand):
        return 0
    G = np.array([g for g, _ in pool])
    c0 = np.array([c for _, c in pool])
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    chunk = max(1, int(4e6 // (len(pool) * W.shape[1])))
    found = 0
    for s in range(0, len(cand), chunk):
        rows = cand[s : s + chunk]
        D = W[rows][:, None, :] - G[None]
        ub = c0[None] + D @ mid + np.abs(D) @ half
        red = ub.min(axis=1) <= b[rows] + slack_tol[rows]
        state[rows[red]] = -1
        found += int(red.sum())
    return found


def _first_crossed(W, slack_all, z, x, state, i, lo, hi, balance, seed):
    """Row crossed first on the segment ``z -> x``; ties broken by perturbing the direction.

    All non-redundant rows take part, so a unique first crossing is a facet.
    """
    active = state >= 0
    undecided = state == 0
    base = x - z
    r = base
    rng = np.random.default_rng(seed + int(i))
    tied = np.array([i])
    for _ in range(6):
        ar = np.where(active, W @ r, 0.0)
        idx, tmin, tsec = kernels.first_hits(np.ascontiguousarray(ar[:, None]), slack_all, 1e-14)
        k = int(idx[0])
        if k >= 0 and undecided[k]:
            if _unique_first(tmin, tsec, _bound_hit(z, r[:, None], lo, hi))[0]:
                return k
            with np.errstate(divide="ignore", invalid="ignore"):
                t = np.where(ar > 1e-14, slack_all / ar, np.inf)
            tied = np.flatnonzero(undecided & (t <= tmin[0] * (1.0 + _TIE)))
        w = rng.standard_normal(len(z))
        if balance:
            w -= w.mean()
        r = base + 1e-6 * np.linalg.norm(base) * w / max(np.linalg.norm(w), 1e-300)
    # unresolved tie: keep the lowest-index candidate (sound, possibly not minimal)
    return int(tied.min()) if len(tied) else int(i)


def _finish(state, tol, stats, t0):
    idx = np.flatnonzero(state == 1)
    stats["essential"] = len(idx)
    stats["removal_fraction"] = 1.0 - len(idx) / max(stats["rows"], 1)
    stats["seconds"] = time.perf_counter() - t0
    return EssentialSet(idx, tol, stats)


def save_reduction(path, polytope: Polytope, essential: EssentialSet, essential_only=False):
    """CSV with one line per row: index, essential flag, b and the coefficients.

    ``essential_only`` writes just the essential rows, which keeps caches of
    large N-1 systems small.
    """
    path = Path(path)
    flags = np.zeros(polytope.m, bool)
    flags[essential.indices] = True
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "essential", "b"] + [f"a{j}" for j in range(polytope.d)])
        for k in range(polytope.m):
            if essential_only and not flags[k]:
                continue
            w.writerow([k, int(flags[k]), repr(float(polytope.b[k]))] + [repr(float(v)) for v in polytope.A[k]])
    return path


def load_reduction(path):
    """Inverse of :func:`save_reduction`: returns ``(A, b, essential_indices)``.

    ``A`` and ``b`` hold the rows present in the file; the indices are the
    original row numbers of the essential rows.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    body = rows[1:]
    A = np.array([[float(v) for v in r[3:]] for r in body]).reshape(len(body), len(rows[0]) - 3)
    b = np.array([float(r[2]) for r in body])
    ess = np.array([int(r[0]) for r in body if r[1] == "1"], dtype=np.int64)
    return A, b, ess


__all__ = [
    "EssentialSet",
    "Polytope",
    "RedundancyError",
    "contains",
    "load_reduction",
    "reduce",
    "save_reduction",
    "test_row_redundant",
]
