import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridmarket.redundancy import (
    Polytope,
    RedundancyError,
    contains,
    load_reduction,
    reduce,
    save_reduction,
    test_row_redundant as row_redundant,
)
from conftest import get_case
from oracles import membership_disagreements, polygon_vertices_brute


def test_duplicate_and_dominated_rows():
    p = Polytope([[1.0], [1.0]], [1.0, 2.0], lower=-10, upper=10)
    assert reduce(p).indices.tolist() == [0]


def test_row_redundancy_lp():
    p = Polytope([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], [1.0, 1.0, 3.0], lower=-5, upper=5)
    assert row_redundant(p, 2, [0, 1])
    assert not row_redundant(p, 0, [1, 2])


def test_box_redundant_row():
    p = Polytope([[1.0, 0.0], [0.0, 1.0]], [20.0, 1.0], lower=-10, upper=10)
    assert reduce(p).indices.tolist() == [1]


def test_infeasible_polytope_raises():
    p = Polytope([[1.0], [-1.0]], [-1.0, -1.0], lower=-10, upper=10)
    with pytest.raises(RedundancyError):
        reduce(p)


def test_contains():
    p = Polytope([[1.0, 1.0]], [1.0], lower=-1, upper=1, balance=True)
    assert contains(p, [0.5, -0.5])
    assert not contains(p, [0.5, 0.4])
    assert contains(p, np.array([[0, 0], [1, -1], [2, -2]])).tolist() == [True, True, False]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(3, 25), st.integers(2, 6), st.booleans())
def test_reduction_preserves_set(backend, seed, m, d, balance):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(m, d))
    if rng.random() < 0.5:
        A = np.vstack([A, A[: m // 2] * rng.uniform(0.5, 2)])
    b = np.abs(rng.normal(size=len(A))) + 0.1
    bounds = np.full(d, 3.0)
    p = Polytope(A, b, -bounds, bounds, balance)
    ess = reduce(p).indices
    bad, _ = membership_disagreements(A, b, A[ess], b[ess], bounds, balance, 2000, rng)
    assert bad == 0
    # every kept row is essential: dropping it enlarges the set
    kept = Polytope(A[ess], b[ess], -bounds, bounds, balance)
    for pos in range(len(ess)):
        others = [j for j in range(len(ess)) if j != pos]
        assert not row_redundant(kept, pos, others)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(3, 15))
def test_2d_reduction_keeps_vertices(backend, seed, m):
    rng = np.random.default_rng(seed)
    ang = rng.uniform(0, 2 * np.pi, m)
    A = np.column_stack([np.cos(ang), np.sin(ang)])
    b = rng.uniform(0.5, 2.0, m)
    box = 5.0
    ess = reduce(Polytope(A, b, -box, box)).indices
    frame = (np.vstack([np.eye(2), -np.eye(2)]), np.full(4, box))
    full = polygon_vertices_brute(np.vstack([A, frame[0]]), np.concatenate([b, frame[1]]))
    red = polygon_vertices_brute(np.vstack([A[ess], frame[0]]), np.concatenate([b[ess], frame[1]]))
    assert full == red


def test_case30_n1():
    case = get_case("case30.m")
    g = case.n1
    p = Polytope(g.A, g.b, -case.bounds, case.bounds, case.balance)
    ess = reduce(p)
    assert 0 < len(ess) < 0.2 * len(g)
    assert ess.stats["rows"] == len(g)


def test_save_load_round_trip(tmp_path):
    p = Polytope([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], [1.0, 1.0, 3.0], lower=-5, upper=5)
    ess = reduce(p)
    save_reduction(tmp_path / "all.csv", p, ess)
    A, b, idx = load_reduction(tmp_path / "all.csv")
    np.testing.assert_array_equal(A, p.A)
    np.testing.assert_array_equal(b, p.b)
    assert idx.tolist() == ess.indices.tolist()
    save_reduction(tmp_path / "ess.csv", p, ess, essential_only=True)
    A, b, idx = load_reduction(tmp_path / "ess.csv")
    np.testing.assert_array_equal(A, p.A[ess.indices])
    assert idx.tolist() == ess.indices.tolist()
