import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridmarket.solver import (
    INFEASIBLE,
    UNBOUNDED,
    DenseSimplex,
    LazyRows,
    LinearProgram,
    check_solution,
    solve_lp,
)
from gridmarket.solver.lpformat import sanitize, to_lp_string, write_lp
from oracles import lp_brute_force


def _random_lp(rng, n, m, box=True):
    """Feasible LP built around a known point; mixed senses."""
    lo = rng.integers(-5, 1, n).astype(float)
    hi = lo + rng.integers(1, 8, n)
    if not box:
        lo[rng.random(n) < 0.3] = -np.inf
    x0 = np.where(np.isfinite(lo), lo, hi - 3) + rng.random(n) * 0.5
    A = rng.integers(-3, 4, (m, n)).astype(float)
    senses = rng.choice(["<=", ">=", "="], m, p=[0.5, 0.3, 0.2])
    ax = A @ x0
    rhs = np.where(senses == "<=", ax + rng.integers(0, 4, m), np.where(senses == ">=", ax - rng.integers(0, 4, m), ax))
    c = rng.integers(-5, 6, n).astype(float)
    lp = LinearProgram()
    for j in range(n):
        lp.add_variable(f"x{j}", lo[j], hi[j], c[j])
    for i in range(m):
        lp.add_constraint(f"r{i}", np.arange(n), A[i], senses[i], rhs[i])
    return lp, A, senses, rhs, lo, hi, c


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 3), st.integers(1, 4))
def test_matches_vertex_enumeration(backend, seed, n, m):
    rng = np.random.default_rng(seed)
    lp, A, senses, rhs, lo, hi, c = _random_lp(rng, n, m)
    G = np.vstack([A[senses != ">="], -A[senses != "<="]])
    h = np.concatenate([rhs[senses != ">="], -rhs[senses != "<="]])
    ref = lp_brute_force(c, G, h, lo, hi)
    sol = solve_lp(lp)
    assert sol.optimal
    assert sol.objective == pytest.approx(ref, abs=1e-6)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 12), st.integers(1, 10))
def test_kkt_certificate(backend, seed, n, m):
    rng = np.random.default_rng(seed)
    lp, *_ = _random_lp(rng, n, m)
    sol = solve_lp(lp)
    assert sol.optimal
    res = check_solution(lp, sol)
    scale = 1 + abs(sol.objective)
    assert res["primal"] <= 1e-7
    assert res["dual_sign"] <= 1e-7
    assert res["complementarity"] <= 1e-6 * scale
    assert res["gap"] <= 1e-6 * scale


def test_infeasible():
    lp = LinearProgram()
    x = lp.add_variable("x", 0, 1)
    lp.add_constraint("c", [x], [1.0], ">=", 2.0)
    assert solve_lp(lp).status == INFEASIBLE


def test_unbounded():
    lp = LinearProgram()
    x = lp.add_variable("x", 0, np.inf, -1.0)
    y = lp.add_variable("y", 0, np.inf)
    lp.add_constraint("c", [x, y], [1.0, -1.0], "<=", 1.0)
    assert solve_lp(lp).status == UNBOUNDED


def test_bounds_only():
    lp = LinearProgram()
    lp.add_variable("x", -2, 3, 1.0)
    lp.add_variable("y", -2, 3, -1.0)
    sol = solve_lp(lp)
    assert sol.x.tolist() == [-2, 3] and sol.objective == -5


def test_dual_is_rhs_sensitivity():
    lp = LinearProgram()
    a = lp.add_variable("a", 0, 100, 10.0)
    b = lp.add_variable("b", 0, 100, 50.0)
    lp.add_constraint("demand", [a, b], [1.0, 1.0], "=", 120.0)
    sol = solve_lp(lp)
    assert sol.objective == pytest.approx(100 * 10 + 20 * 50)
    assert sol.duals[0] == pytest.approx(50.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_lazy_rows_equal_eager(backend, seed):
    rng = np.random.default_rng(seed)
    n, m, k = 6, 3, 25
    lp, *_ = _random_lp(rng, n, m)
    cols = np.arange(n)
    M = rng.normal(size=(k, n))
    x_feas = np.array(lp.lower) + 0.1
    r = M @ x_feas + rng.uniform(0.5, 5, k)
    eager = LinearProgram(*[list(v) for v in (lp.names, lp.lower, lp.upper, lp.cost, lp.row_names, lp.row_index, lp.row_coef, lp.senses, lp.rhs)])
    for i in range(k):
        eager.add_constraint(f"z{i}", cols, M[i], "<=", r[i])
    full = solve_lp(eager)
    lazy = solve_lp(lp, lazy=[LazyRows(cols, M, r)], batch=3)
    assert full.status == lazy.status
    if full.optimal:
        assert lazy.objective == pytest.approx(full.objective, abs=1e-7 * (1 + abs(full.objective)))
        assert np.all(M @ lazy.x <= r + 1e-6)
        # dual objective of the lazy model reproduces the primal objective
        assert len(lazy.lazy_duals[0]) == k
        assert np.all(lazy.lazy_duals[0] <= 1e-9)


def test_simplex_add_rows_warm_start(backend):
    A = np.array([[1.0, 1.0]])
    s = DenseSimplex(A, [10.0], [-1.0, -2.0], [0.0, 0.0], [8.0, 8.0])
    assert s.solve() == "optimal"
    assert s.objective() == pytest.approx(-18.0)
    s.add_rows(np.array([[0.0, 1.0]]), [5.0])
    assert s.solve() == "optimal"
    assert s.objective() == pytest.approx(-15.0)


def test_sanitize():
    assert sanitize("G[p1,0]") == "G_p1_0_"
    assert sanitize("3x") == "n3x"


def test_lp_export(tmp_path):
    lp = LinearProgram()
    x = lp.add_variable("G[a]", 0, 5, 2.0)
    y = lp.add_variable("G(a)", -np.inf, np.inf, -1.0)
    lp.add_constraint("bal", [x, y], [1.0, -1.0], "=", 3.0)
    text = to_lp_string(lp)
    assert text.splitlines()[1] == "Minimize"
    assert " G_a_ free" not in text and " G_a__1 free" in text
    assert "bal: 1.0 G_a_ - 1.0 G_a__1 = 3.0" in text
    assert text.rstrip().endswith("End")
    path = write_lp(lp, tmp_path / "m.lp")
    assert path.read_text() == text
