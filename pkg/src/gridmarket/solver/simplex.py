"""Dense bounded-variable revised simplex.

Works on the equality form ``min c.x  s.t.  A x = b,  lower <= x <= upper``.
An artificial column per row provides the phase-one basis; afterwards the
artificials are fixed at zero and stay in the tableau, which keeps the basis
square when rows are appended later (see :meth:`DenseSimplex.add_row`).

The explicit basis inverse is updated with rank-one eta steps and rebuilt
every ``refactor_every`` pivots.
"""
from __future__ import annotations

import numpy as np

from gridmarket import kernels

LOWER, UPPER, FREE, BASIC = 0, 1, 2, 3

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"
CUTOFF = "cutoff"
NUMERICAL = "numerical_failure"


class _SingularBasis(ArithmeticError):
    pass


class DenseSimplex:
    """Warm-startable simplex state for one LP.

    Parameters
    ----------
    A, b : array_like
        Equality constraints.
    c : array_like
        Cost vector (minimized).
    lower, upper : array_like
        Variable bounds, may be infinite.
    """

    def __init__(self, A, b, c, lower, upper, *, tol=1e-9, refactor_every=64, max_iter=None):
        A = np.array(A, dtype=float, ndmin=2)
        self.m, self.n = A.shape
        self.tol = tol
        self.ptol = 1e-9
        self.refactor_every = refactor_every
        self._max_iter = max_iter
        self.iterations = 0
        self._iter_base = 0
        self.b = np.array(b, dtype=float).reshape(self.m)
        self.c_user = np.array(c, dtype=float).reshape(self.n)
        lo = np.array(lower, dtype=float).reshape(self.n)
        hi = np.array(upper, dtype=float).reshape(self.n)
        if np.any(lo > hi):
            raise ValueError("variable with lower bound above upper bound")

        x = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
        status = np.where(np.isfinite(lo), LOWER, np.where(np.isfinite(hi), UPPER, FREE))
        resid = self.b - A @ x
        sign = np.where(resid >= 0, 1.0, -1.0)

        # columns: user variables first, then one artificial per row
        self.A = np.hstack([A, np.diag(sign)])
        self.lower = np.concatenate([lo, np.zeros(self.m)])
        self.upper = np.concatenate([hi, np.full(self.m, np.inf)])
        self.is_art = np.concatenate([np.zeros(self.n, bool), np.ones(self.m, bool)])
        self.x = np.concatenate([x, np.abs(resid)])
        self.status = np.concatenate([status, np.full(self.m, BASIC)]).astype(np.int8)
        self.basis = np.arange(self.n, self.n + self.m, dtype=np.int64)
        self.Binv = np.diag(sign)
        self._since_refactor = 0
        self.phase_one_done = False
        self.last_status = None

    @property
    def max_iter(self):
        if self._max_iter is not None:
            return self._max_iter
        return 50 * (self.m + self.A.shape[1]) + 1000

    def _cost_vector(self):
        c = np.zeros(self.A.shape[1])
        c[: self.n] = self.c_user
        for col, cost in getattr(self, "_extra_cost", {}).items():
            c[col] = cost
        return c

    # ------------------------------------------------------------------ state
    def set_objective(self, c):
        self.c_user = np.array(c, dtype=float).reshape(self.n)

    def add_row(self, coeffs, rhs, slack_lower=0.0, slack_upper=np.inf):
        """Append ``coeffs . x + s = rhs`` with a new slack variable made basic.

        ``coeffs`` covers the user variables that existed at construction plus
        slacks added earlier (shorter vectors are zero padded).
        """
        coeffs = np.asarray(coeffs, dtype=float)
        n_cols = self.A.shape[1]
        row = np.zeros(n_cols + 1)
        user_positions = self._user_positions()
        row[user_positions[: len(coeffs)]] = coeffs
        row[n_cols] = 1.0
        self.A = np.vstack([np.hstack([self.A, np.zeros((self.m, 1))]), row])
        self.b = np.append(self.b, rhs)
        self.lower = np.append(self.lower, slack_lower)
        self.upper = np.append(self.upper, slack_upper)
        self.is_art = np.append(self.is_art, False)
        self._slack_cols = getattr(self, "_slack_cols", []) + [n_cols]
        value = rhs - row[:n_cols] @ self.x
        self.x = np.append(self.x, value)
        self.status = np.append(self.status, np.int8(BASIC))
        aB = row[self.basis]
        m = self.m
        Binv = np.zeros((m + 1, m + 1))
        Binv[:m, :m] = self.Binv
        Binv[m, :m] = -aB @ self.Binv
        Binv[m, m] = 1.0
        self.Binv = Binv
        self.basis = np.append(self.basis, n_cols)
        self.m += 1

    def add_rows(self, C, rhs, slack_lower=0.0, slack_upper=np.inf):
        """Batched :meth:`add_row`: append ``C x + s = rhs``, one basic slack per row."""
        C = np.atleast_2d(np.asarray(C, dtype=float))
        k = C.shape[0]
        if k == 0:
            return
        m, n_cols = self.m, self.A.shape[1]
        rows = np.zeros((k, n_cols + k))
        rows[:, self._user_positions()[: C.shape[1]]] = C
        rows[:, n_cols:] = np.eye(k)
        self.A = np.vstack([np.hstack([self.A, np.zeros((m, k))]), rows])
        self.b = np.concatenate([self.b, np.asarray(rhs, dtype=float).reshape(k)])
        self.lower = np.concatenate([self.lower, np.broadcast_to(slack_lower, (k,))])
        self.upper = np.concatenate([self.upper, np.broadcast_to(slack_upper, (k,))])
        self.is_art = np.concatenate([self.is_art, np.zeros(k, bool)])
        self._slack_cols = getattr(self, "_slack_cols", []) + list(range(n_cols, n_cols + k))
        self.x = np.concatenate([self.x, self.b[m:] - rows[:, :n_cols] @ self.x])
        self.status = np.concatenate([self.status, np.full(k, BASIC, dtype=np.int8)])
        aB = rows[:, self.basis]
        Binv = np.zeros((m + k, m + k))
        Binv[:m, :m] = self.Binv
        Binv[m:, :m] = -aB @ self.Binv
        Binv[m:, m:] = np.eye(k)
        self.Binv = Binv
        self.basis = np.concatenate([self.basis, np.arange(n_cols, n_cols + k)])
        self.m += k

    def set_rhs(self, b):
        """Replace the right-hand side; basic values follow, the basis is kept."""
        self.b = np.array(b, dtype=float).reshape(self.m)
        nonbasic = self.status != BASIC
        self.x[self.basis] = self.Binv @ (self.b - self.A[:, nonbasic] @ self.x[nonbasic])

    def add_column(self, col, cost, lower=0.0, upper=np.inf):
        """Append a nonbasic column at its lower bound; returns its position."""
        if not np.isfinite(lower):
            raise ValueError("appended columns need a finite lower bound")
        pos = self.A.shape[1]
        self.A = np.hstack([self.A, np.asarray(col, dtype=float).reshape(self.m, 1)])
        self.lower = np.append(self.lower, lower)
        self.upper = np.append(self.upper, upper)
        self.is_art = np.append(self.is_art, False)
        self.status = np.append(self.status, np.int8(LOWER))
        self.x = np.append(self.x, lower)
        if lower != 0.0:
            self.x[self.basis] -= self.Binv @ (self.A[:, pos] * lower)
        self._extra_cost = getattr(self, "_extra_cost", {})
        self._extra_cost[pos] = float(cost)
        return pos

    def _user_positions(self):
        slack = getattr(self, "_slack_cols", [])
        return np.concatenate([np.arange(self.n), np.asarray(slack, dtype=np.int64)]).astype(np.int64)

    def user_values(self):
        """Values of the original variables followed by slacks of added rows."""
        return self.x[self._user_positions()]

    def refactor(self):
        B = self.A[:, self.basis]
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError:
            raise _SingularBasis() from None
        nonbasic = self.status != BASIC
        rhs = self.b - self.A[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = self.Binv @ rhs
        self._since_refactor = 0

    # ------------------------------------------------------------ iteration
    def _pivot(self, q, r, alpha):
        ar = alpha[r]
        row_r = self.Binv[r] / ar
        self.Binv -= np.outer(alpha, row_r)
        self.Binv[r] = row_r
        self.basis[r] = q
        self.status[q] = BASIC
        self._since_refactor += 1
        if self._since_refactor >= self.refactor_every:
            self.refactor()

    def _reduced_costs(self, c):
        y = c[self.basis] @ self.Binv
        d = c - y @ self.A
        d[self.basis] = 0.0
        return y, d

    def _primal(self, c, stop_below=None):
        tol = self.tol
        degenerate = 0
        movable = self.upper > self.lower
        while True:
            if self.iterations - self._iter_base >= self.max_iter:
                return ITERATION_LIMIT
            y, d = self._reduced_costs(c)
            st = self.status
            up = ((st == LOWER) | (st == FREE)) & (d < -tol) & movable
            down = ((st == UPPER) | (st == FREE)) & (d > tol) & movable
            cand = np.flatnonzero(up | down)
            if len(cand) == 0:
                return OPTIMAL
            if degenerate > 50:
                q = int(cand[0])
            else:
                q = int(cand[np.argmax(np.abs(d[cand]))])
            direction = 1.0 if d[q] < 0 else -1.0
            alpha = self.Binv @ self.A[:, q]
            delta = direction * alpha
            B = self.basis
            r, theta = kernels.ratio_test(
                self.x[B], self.lower[B], self.upper[B], delta, self.ptol, B, degenerate > 50
            )
            flip = self.upper[q] - self.lower[q]
            self.iterations += 1
            if flip <= theta:
                if not np.isfinite(flip):
                    return UNBOUNDED
                self.x[B] -= flip * delta
                if direction > 0:
                    self.x[q] = self.upper[q]
                    self.status[q] = UPPER
                else:
                    self.x[q] = self.lower[q]
                    self.status[q] = LOWER
                degenerate = 0
            else:
                if r < 0:
                    return UNBOUNDED
                leaving = B[r]
                self.x[B] -= theta * delta
                self.x[q] += direction * theta
                if delta[r] > 0:
                    self.x[leaving] = self.lower[leaving]
                    self.status[leaving] = LOWER
                else:
                    self.x[leaving] = self.upper[leaving]
                    self.status[leaving] = UPPER
                self._pivot(q, r, alpha)
                degenerate = degenerate + 1 if theta <= 1e-12 else 0
            if stop_below is not None and c @ self.x < stop_below:
                return CUTOFF

    def primal_infeasibility(self):
        xb = self.x[self.basis]
        lb, ub = self.lower[self.basis], self.upper[self.basis]
        return np.maximum(lb - xb, xb - ub).clip(min=0.0)

    def is_dual_feasible(self, c):
        _, d = self._reduced_costs(c)
        st = self.status
        movable = self.upper > self.lower
        bad = movable & (
            ((st == LOWER) & (d < -1e-7))
            | ((st == UPPER) & (d > 1e-7))
            | ((st == FREE) & (np.abs(d) > 1e-7))
        )
        return not bad.any()

    def _dual(self, c, stop_above=None):
        feas = 1e-9
        degenerate = 0
        movable = self.upper > self.lower
        _, d = self._reduced_costs(c)
        while True:
            if self.iterations - self._iter_base >= self.max_iter:
                return ITERATION_LIMIT
            viol = self.primal_infeasibility()
            scale = 1.0 + np.abs(self.x[self.basis])
            r = int(np.argmax(viol / scale))
            if viol[r] <= feas * scale[r]:
                return OPTIMAL
            leaving = self.basis[r]
            below = self.x[leaving] < self.lower[leaving]
            target = self.lower[leaving] if below else self.upper[leaving]
            alpha_r = self.Binv[r] @ self.A
            state = np.where(movable & (self.status != BASIC), self.status, -1).astype(np.int8)
            q = kernels.dual_ratio_test(d, alpha_r, state, 1.0 if below else -1.0, self.ptol, degenerate > 50)
            self.iterations += 1
            if q < 0:
                return INFEASIBLE
            step = (self.x[leaving] - target) / alpha_r[q]
            alpha = self.Binv @ self.A[:, q]
            self.x[self.basis] -= alpha * step
            self.x[q] += step
            self.x[leaving] = target
            self.status[leaving] = LOWER if below else UPPER
            dq = d[q]
            since = self._since_refactor
            self._pivot(q, r, alpha)
            if self._since_refactor > since:
                d -= (dq / alpha_r[q]) * alpha_r
                d[self.basis] = 0.0
            else:
                _, d = self._reduced_costs(c)
            degenerate = degenerate + 1 if abs(dq) <= 1e-12 else 0
            if stop_above is not None and c @ self.x > stop_above:
                return CUTOFF

    # ---------------------------------------------------------------- driver
    def _phase_one(self):
        c1 = self.is_art.astype(float)
        status = self._primal(c1)
        if status == ITERATION_LIMIT:
            return status
        infeas = c1 @ self.x
        if infeas > 1e-7 * (1.0 + np.abs(self.b).max(initial=0.0)):
            return INFEASIBLE
        art = np.flatnonzero(self.is_art)
        self.upper[art] = 0.0
        nonbasic = art[self.status[art] != BASIC]
        self.x[nonbasic] = 0.0
        self.status[nonbasic] = LOWER
        self.refactor()
        self.phase_one_done = True
        return OPTIMAL

    def solve(self, stop_below=None, stop_above=None):
        """Run to optimality from the current basis.

        ``stop_below`` ends the primal phase once a feasible point beats the
        given objective; ``stop_above`` ends the dual phase once the dual
        bound exceeds it. Both return status ``"cutoff"``. The iteration
        limit applies per call.
        """
        try:
            return self._solve(stop_below, stop_above)
        except _SingularBasis:
            # numerically singular basis: cold start once on the same rows
            self._restart()
            try:
                return self._solve(stop_below, stop_above)
            except _SingularBasis:
                self.last_status = NUMERICAL
                return NUMERICAL

    def _solve(self, stop_below=None, stop_above=None):
        self._iter_base = self.iterations
        if not self.phase_one_done:
            if self.primal_infeasibility().max(initial=0.0) > 1e-9:
                # rows appended before the first solve: rebuild the artificial basis
                self._restart()
            status = self._phase_one()
            if status != OPTIMAL:
                self.last_status = status
                return status
        c = self._cost_vector()
        if self.primal_infeasibility().max(initial=0.0) > 1e-9:
            if self.is_dual_feasible(c):
                status = self._dual(c, stop_above=stop_above)
            else:
                status = self._repair()
            if status != OPTIMAL:
                self.last_status = status
                return status
        status = self._primal(c, stop_below=stop_below)
        if status == OPTIMAL:
            self.refactor()
            if self.primal_infeasibility().max(initial=0.0) > 1e-7:
                # drift after refactor; clean up with the dual then re-check
                status = self._dual(c)
                if status == OPTIMAL:
                    status = self._primal(c)
        self.last_status = status
        return status

    def _repair(self):
        """Restore primal feasibility from a warm basis.

        Each violated bound of a basic variable is temporarily replaced by
        the opposite half-line ending at the violated bound, so the basis is
        feasible for the relaxed box. The variable is then pushed back to
        its bound by a primal phase with a one-entry objective.
        """
        feas = 1e-9
        B = self.basis
        xb = self.x[B]
        lo, hi = self.lower[B], self.upper[B]
        below = B[xb < lo - feas * (1.0 + np.abs(lo))]
        above = B[xb > hi + feas * (1.0 + np.abs(hi))]
        saved = {int(k): (self.lower[k], self.upper[k]) for k in np.concatenate([below, above])}
        for k in below:
            self.upper[k], self.lower[k] = self.lower[k], -np.inf
        for k in above:
            self.lower[k], self.upper[k] = self.upper[k], np.inf
        for k in list(saved):
            orig_lo, orig_hi = saved[k]
            target_lo = k in set(below.tolist())
            if target_lo and self.x[k] < orig_lo - feas * (1.0 + abs(orig_lo)):
                c = np.zeros(self.A.shape[1])
                c[k] = -1.0
            elif not target_lo and self.x[k] > orig_hi + feas * (1.0 + abs(orig_hi)):
                c = np.zeros(self.A.shape[1])
                c[k] = 1.0
            else:
                c = None
            if c is not None:
                status = self._primal(c)
                if status != OPTIMAL:
                    self._restore_bounds(saved)
                    self.refactor()
                    return status
                bound = orig_lo if target_lo else orig_hi
                if abs(self.x[k] - bound) > 1e-7 * (1.0 + abs(bound)) and (
                    (target_lo and self.x[k] < bound) or (not target_lo and self.x[k] > bound)
                ):
                    self._restore_bounds(saved)
                    self.refactor()
                    return INFEASIBLE
            self._restore_bounds({k: saved.pop(k)})
        return OPTIMAL

    def _restore_bounds(self, saved):
        for k, (lo, hi) in saved.items():
            self.lower[k], self.upper[k] = lo, hi
            if self.status[k] != BASIC:
                if np.isfinite(lo) and abs(self.x[k] - lo) <= abs(self.x[k] - hi):
                    self.x[k], self.status[k] = lo, LOWER
                elif np.isfinite(hi):
                    self.x[k], self.status[k] = hi, UPPER

    def _restart(self):
        """Cold start on the current rows, keeping user variable values where finite."""
        n_cols = self.A.shape[1]
        keep = ~self.is_art
        A_user = self.A[:, keep]
        lo, hi = self.lower[keep], self.upper[keep]
        x = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
        status = np.where(np.isfinite(lo), LOWER, np.where(np.isfinite(hi), UPPER, FREE))
        resid = self.b - A_user @ x
        sign = np.where(resid >= 0, 1.0, -1.0)
        new_A = np.zeros((self.m, n_cols))
        new_A[:, keep] = A_user
        art = np.flatnonzero(self.is_art)
        # reuse the existing artificial slots; rows added later have theirs appended
        art_cols = list(art)
        extra = self.m - len(art_cols)
        if extra > 0:
            new_A = np.hstack([new_A, np.zeros((self.m, extra))])
            self.lower = np.append(self.lower, np.zeros(extra))
            self.upper = np.append(self.upper, np.zeros(extra))
            self.is_art = np.append(self.is_art, np.ones(extra, bool))
            self.x = np.append(self.x, np.zeros(extra))
            self.status = np.append(self.status, np.full(extra, LOWER, dtype=np.int8))
            art_cols += list(range(n_cols, n_cols + extra))
            keep = np.append(keep, np.zeros(extra, bool))
        art_cols = np.asarray(art_cols[: self.m], dtype=np.int64)
        new_A[np.arange(self.m), art_cols] = sign
        self.A = new_A
        self.x[keep] = x
        self.status[keep] = status
        unused = np.setdiff1d(np.flatnonzero(self.is_art), art_cols)
        self.x[unused] = 0.0
        self.status[unused] = LOWER
        self.upper[unused] = 0.0
        self.x[art_cols] = np.abs(resid)
        self.upper[art_cols] = np.inf
        self.status[art_cols] = BASIC
        self.basis = art_cols.copy()
        self.Binv = np.diag(sign)
        self._since_refactor = 0
        self.phase_one_done = False

    def objective(self):
        return float(self.c_user @ self.x[: self.n])

    def duals(self):
        """Row duals ``y`` with ``d objective / d b``."""
        return self._cost_vector()[self.basis] @ self.Binv
