"""Linear programs with primal and dual solutions.

``solve_lp`` uses the dense bounded simplex in :mod:`gridmarket.solver.simplex`.
:mod:`gridmarket.solver.lpformat` writes the same model as a CPLEX-LP text file
for use with external solvers.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gridmarket.solver.simplex import (
    CUTOFF,
    INFEASIBLE,
    ITERATION_LIMIT,
    NUMERICAL,
    OPTIMAL,
    UNBOUNDED,
    DenseSimplex,
)

__all__ = [
    "DenseSimplex",
    "LazyRows",
    "LinearProgram",
    "LpSolution",
    "SolveError",
    "check_solution",
    "solve_lp",
    "OPTIMAL",
    "INFEASIBLE",
    "UNBOUNDED",
    "ITERATION_LIMIT",
    "CUTOFF",
    "NUMERICAL",
]

SENSES = ("<=", "=", ">=")


class SolveError(RuntimeError):
    """Raised when an LP cannot be solved to optimality where optimality is required."""


@dataclass
class LinearProgram:
    """``min c.x`` over named, bounded variables and named linear rows.

    Rows are kept sparse (index and coefficient arrays) until :meth:`matrix`
    assembles the dense form handed to the simplex.
    """

    names: list = field(default_factory=list)
    lower: list = field(default_factory=list)
    upper: list = field(default_factory=list)
    cost: list = field(default_factory=list)
    row_names: list = field(default_factory=list)
    row_index: list = field(default_factory=list)
    row_coef: list = field(default_factory=list)
    senses: list = field(default_factory=list)
    rhs: list = field(default_factory=list)

    def add_variable(self, name, lower=0.0, upper=np.inf, cost=0.0):
        if not np.isfinite(cost):
            raise ValueError(f"objective coefficient of {name} is not finite")
        self.names.append(name)
        self.lower.append(float(lower))
        self.upper.append(float(upper))
        self.cost.append(float(cost))
        return len(self.names) - 1

    def add_variables(self, names, lower=0.0, upper=np.inf, cost=0.0):
        """Vectorized :meth:`add_variable`; returns the index array."""
        k = len(names)
        start = len(self.names)
        self.names.extend(names)
        self.lower.extend(np.broadcast_to(np.asarray(lower, float), (k,)).tolist())
        self.upper.extend(np.broadcast_to(np.asarray(upper, float), (k,)).tolist())
        cost = np.broadcast_to(np.asarray(cost, float), (k,))
        if not np.all(np.isfinite(cost)):
            raise ValueError("objective coefficients must be finite")
        self.cost.extend(cost.tolist())
        return np.arange(start, start + k)

    def add_constraint(self, name, index, coef, sense, rhs):
        if sense not in SENSES:
            raise ValueError(f"unknown sense {sense!r}")
        index = np.asarray(index, dtype=np.int64).ravel()
        coef = np.broadcast_to(np.asarray(coef, dtype=float), index.shape).copy()
        if len(index) and (index.min() < 0 or index.max() >= len(self.names)):
            raise ValueError(f"row {name} references an undeclared variable")
        self.row_names.append(name)
        self.row_index.append(index)
        self.row_coef.append(coef)
        self.senses.append(sense)
        self.rhs.append(float(rhs))
        return len(self.row_names) - 1

    @property
    def n_vars(self):
        return len(self.names)

    @property
    def n_rows(self):
        return len(self.row_names)

    def matrix(self):
        A = np.zeros((self.n_rows, self.n_vars))
        for i, (idx, coef) in enumerate(zip(self.row_index, self.row_coef)):
            np.add.at(A[i], idx, coef)
        return A


@dataclass
class LazyRows:
    """``matrix @ x[columns] <= rhs`` rows that enter the model only when violated.

    Large constraint families (N-1 flow limits) are mostly slack at the
    optimum; separating them keeps the simplex small while the final point
    satisfies every row.
    """

    columns: np.ndarray
    matrix: np.ndarray
    rhs: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.columns = np.asarray(self.columns, dtype=np.int64)
        self.matrix = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        self.rhs = np.asarray(self.rhs, dtype=float).reshape(len(self.matrix))
        if self.matrix.shape[1] != len(self.columns):
            raise ValueError("lazy row width does not match its column index")


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    objective: float | None = None
    iterations: int = 0
    lazy_duals: list = field(default_factory=list)
    lazy_added: int = 0
    rounds: int = 0

    @property
    def optimal(self):
        return self.status == OPTIMAL

    def value(self, lp, name):
        return float(self.x[lp.names.index(name)])


def solve_lp(lp: LinearProgram, max_iter=None, lazy=(), lazy_tol=1e-7, batch=200) -> LpSolution:
    """Solve ``lp`` with the dense bounded simplex.

    Duals are sensitivities ``d objective / d rhs`` for every row, so a
    binding ``>=`` row in a minimization has a nonnegative dual.

    ``lazy`` is a sequence of :class:`LazyRows`. Violated rows (beyond
    ``lazy_tol``) are appended up to ``batch`` per block and round, and the
    model is re-solved from the previous basis until none is violated.
    ``lazy_duals`` then holds one dual per lazy row (zero if never added).

    Examples
    --------
    >>> lp = LinearProgram()
    >>> x = lp.add_variable("x", lower=-np.inf, cost=1.0)
    >>> _ = lp.add_constraint("c", [x], [1.0], ">=", 3.0)
    >>> sol = solve_lp(lp)
    >>> round(sol.objective, 9), round(float(sol.duals[0]), 9)
    (3.0, 1.0)
    """
    A = lp.matrix()
    m, n = A.shape
    senses = np.asarray(lp.senses)
    ineq = np.flatnonzero(senses != "=")
    # slack s >= 0 with  a.x + s = b  for <=  and  a.x - s = b  for >=
    S = np.zeros((m, len(ineq)))
    S[ineq, np.arange(len(ineq))] = np.where(senses[ineq] == "<=", 1.0, -1.0)
    full = np.hstack([A, S])
    c = np.concatenate([np.asarray(lp.cost, float), np.zeros(len(ineq))])
    lo = np.concatenate([np.asarray(lp.lower, float), np.zeros(len(ineq))])
    hi = np.concatenate([np.asarray(lp.upper, float), np.full(len(ineq), np.inf)])
    if np.any(lo > hi):
        return LpSolution(INFEASIBLE)
    lazy = list(lazy)
    if m == 0 and not lazy:
        return _solve_bounds_only(c[:n], lo[:n], hi[:n])
    b = np.asarray(lp.rhs, float)
    if m == 0:
        full, b = np.zeros((1, len(c))), np.zeros(1)
    simplex = DenseSimplex(full, b, c, lo, hi, max_iter=max_iter)
    added = []
    rounds = 0
    while True:
        status = simplex.solve()
        if status != OPTIMAL:
            return LpSolution(status, iterations=simplex.iterations, rounds=rounds)
        x = simplex.x[:n]
        new_rows, new_rhs = [], []
        for k, block in enumerate(lazy):
            viol = block.matrix @ x[block.columns] - block.rhs
            scale = lazy_tol * (1.0 + np.abs(block.rhs))
            hit = np.flatnonzero(viol > scale)
            if len(hit) == 0:
                continue
            hit = hit[np.argsort(-viol[hit], kind="stable")][:batch]
            for r in np.sort(hit):
                row = np.zeros(len(c))
                row[block.columns] = block.matrix[r]
                new_rows.append(row)
                new_rhs.append(block.rhs[r])
                added.append((k, int(r)))
        if not new_rows:
            break
        rounds += 1
        simplex.add_rows(np.array(new_rows), new_rhs)
    x = simplex.x[:n].copy()
    y = simplex.duals()
    lazy_duals = [np.zeros(len(block.rhs)) for block in lazy]
    for pos, (k, r) in enumerate(added, start=len(b)):
        lazy_duals[k][r] = y[pos]
    return LpSolution(
        OPTIMAL,
        x=x,
        duals=y[: m],
        objective=float(np.asarray(lp.cost) @ x),
        iterations=simplex.iterations,
        lazy_duals=lazy_duals,
        lazy_added=len(added),
        rounds=rounds,
    )


def _solve_bounds_only(c, lo, hi):
    x = np.where(c > 0, lo, np.where(c < 0, hi, np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))))
    if not np.all(np.isfinite(x)):
        return LpSolution(UNBOUNDED)
    return LpSolution(OPTIMAL, x=x, duals=np.zeros(0), objective=float(c @ x))


def check_solution(lp: LinearProgram, sol: LpSolution):
    """Primal residual, complementary-slackness residual and duality gap of an optimal solution.

    The dual objective is built from the row duals plus the bound multipliers
    implied by the reduced costs.
    """
    A = lp.matrix()
    x, y = sol.x, sol.duals
    b = np.asarray(lp.rhs, float)
    c = np.asarray(lp.cost, float)
    lo, hi = np.asarray(lp.lower, float), np.asarray(lp.upper, float)
    ax = A @ x
    senses = np.asarray(lp.senses)
    viol = np.where(senses == "<=", ax - b, np.where(senses == ">=", b - ax, np.abs(ax - b)))
    primal = max(viol.max(initial=0.0), (lo - x).max(initial=0.0), (x - hi).max(initial=0.0))
    # row duals: <= rows need y <= 0, >= rows need y >= 0 (minimization)
    dual_sign = max(
        y[senses == "<="].max(initial=0.0),
        (-y[senses == ">="]).max(initial=0.0),
    )
    slack = np.where(senses == "=", 0.0, b - ax)
    comp_rows = np.abs(y * slack).max(initial=0.0)
    d = c - A.T @ y
    d[np.abs(d) <= 1e-9 * (1.0 + np.abs(c))] = 0.0
    # d > 0 needs x at lower, d < 0 at upper
    with np.errstate(invalid="ignore"):
        gap_lo = np.where(d > 0, d * (x - lo), 0.0)
        gap_hi = np.where(d < 0, -d * (hi - x), 0.0)
        comp_bounds = np.nan_to_num(np.maximum(gap_lo, gap_hi), nan=np.inf).max(initial=0.0)
    dual_obj = y @ b
    with np.errstate(invalid="ignore"):
        dual_obj += np.where(d > 0, d * lo, 0.0).sum() + np.where(d < 0, d * hi, 0.0).sum()
    gap = abs(float(c @ x) - float(dual_obj))
    return {
        "primal": float(primal),
        "dual_sign": float(dual_sign),
        "complementarity": float(max(comp_rows, comp_bounds)),
        "gap": gap,
    }
