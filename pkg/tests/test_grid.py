import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridmarket.dataio import Dataset, Line, Node, Options, Plant, Zone, load_fixture
from gridmarket.grid import (
    BASECASE,
    GridError,
    build_security_constraints,
    build_topology,
    compute_flows,
    compute_lodf,
    compute_ptdf,
    enumerate_contingencies,
    post_contingency_flows,
)
from oracles import connected, dc_flows


@st.composite
def networks(draw, max_nodes=8):
    """Connected random network: a spanning tree plus extra lines."""
    n = draw(st.integers(2, max_nodes))
    lines = []
    for k in range(1, n):
        parent = draw(st.integers(0, k - 1))
        lines.append((parent, k))
    for _ in range(draw(st.integers(0, n))):
        a, b = draw(st.integers(0, n - 1)), draw(st.integers(0, n - 1))
        if a != b:
            lines.append((a, b))
    x = draw(st.lists(st.floats(0.05, 2.0), min_size=len(lines), max_size=len(lines)))
    slack = draw(st.integers(0, n - 1))
    ds = Dataset(
        nodes=[Node(f"n{i}", "Z", i == slack) for i in range(n)],
        zones=[Zone("Z")],
        lines=[Line(f"l{k}", f"n{a}", f"n{b}", x[k], 100.0, True) for k, (a, b) in enumerate(lines)],
        plants=[Plant("p", "n0", 1.0, 10.0)],
        demand={f"n{i}": {0: 1.0} for i in range(n)},
        timesteps=[0],
    )
    ds.validate()
    return ds


def _lines(ds):
    return [(l.node_from, l.node_to, l.reactance) for l in ds.lines]


@settings(max_examples=60, deadline=None)
@given(networks(), st.integers(0, 2**31 - 1))
def test_ptdf_matches_direct_solve(ds, seed):
    topo = build_topology(ds)
    p = np.random.default_rng(seed).normal(size=topo.n_nodes)
    p -= p.mean()
    ref = dc_flows(topo.node_ids, _lines(ds), p, topo.node_ids[topo.slack[0]])
    np.testing.assert_allclose(compute_flows(compute_ptdf(topo), p), ref, atol=1e-8)


@settings(max_examples=40, deadline=None)
@given(networks(), st.integers(0, 2**31 - 1))
def test_flows_independent_of_slack(ds, seed):
    topo = build_topology(ds)
    p = np.random.default_rng(seed).normal(size=topo.n_nodes)
    p -= p.mean()
    flows = [compute_ptdf(topo, [s]).matrix @ p for s in range(topo.n_nodes)]
    for f in flows[1:]:
        np.testing.assert_allclose(f, flows[0], atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(networks(), st.integers(0, 2**31 - 1))
def test_lodf_matches_rebuilt_topology(ds, seed):
    topo = build_topology(ds)
    ptdf = compute_ptdf(topo)
    p = np.random.default_rng(seed).normal(size=topo.n_nodes)
    p -= p.mean()
    for k, lid in enumerate(topo.line_ids):
        lodf = compute_lodf(ptdf, topo, [lid])
        rest = [l for j, l in enumerate(_lines(ds)) if j != k]
        assert lodf.islanding == (not connected(topo.node_ids, rest))
        if lodf.islanding:
            continue
        post = post_contingency_flows(ptdf, lodf, p)
        assert post[k] == 0
        ref = dc_flows(topo.node_ids, rest, p, topo.node_ids[0])
        np.testing.assert_allclose(np.delete(post, k), ref, atol=1e-8)


def test_ring_ptdf_column():
    topo = build_topology(load_fixture("three_node_ring"))
    col = compute_ptdf(topo).matrix[:, topo.node_index["2"]]
    np.testing.assert_allclose(col, [-2 / 3, -1 / 3, 1 / 3], atol=1e-12)


def test_slack_column_is_zero():
    topo = build_topology(load_fixture("three_node_ring"))
    assert np.all(compute_ptdf(topo).matrix[:, topo.slack[0]] == 0)


def test_radial_outage_islands():
    topo = build_topology(load_fixture("two_node"))
    assert compute_lodf(compute_ptdf(topo), topo, ["l1"]).islanding


def test_unbalanced_injection_rejected():
    topo = build_topology(load_fixture("two_node"))
    with pytest.raises(GridError, match="unbalanced"):
        compute_flows(compute_ptdf(topo), [10.0, 0.0])


def test_two_slacks_rejected():
    ds = load_fixture("three_node_ring")
    ds.nodes[1].slack = True
    with pytest.raises(GridError):
        build_topology(ds)


def test_group_outage_equals_rebuilt():
    ds = load_fixture("case30.m")
    topo = build_topology(ds)
    ptdf = compute_ptdf(topo)
    p = np.linspace(-1, 1, topo.n_nodes)
    p -= p.mean()
    tested = 0
    for i in range(0, topo.n_lines, 5):
        for j in range(i + 1, topo.n_lines):
            rest = [l for k, l in enumerate(_lines(ds)) if k not in (i, j)]
            lodf = compute_lodf(ptdf, topo, [topo.line_ids[i], topo.line_ids[j]])
            assert lodf.islanding == (not connected(topo.node_ids, rest))
            if lodf.islanding:
                continue
            post = post_contingency_flows(ptdf, lodf, p)
            np.testing.assert_allclose(np.delete(post, [i, j]), dc_flows(topo.node_ids, rest, p, "1"), atol=1e-9)
            tested += 1
    assert tested > 0


def test_contingency_enumeration_and_groups():
    ds = load_fixture("three_node_ring")
    topo = build_topology(ds)
    o = Options()
    assert enumerate_contingencies(topo, o) == []
    o.contingency.enabled = True
    assert [s.id for s in enumerate_contingencies(topo, o)] == ["l12", "l13", "l23"]
    o.contingency.groups = [["l12", "l13"]]
    sc = enumerate_contingencies(topo, o)
    assert [s.id for s in sc] == ["l23", "l12+l13"]
    assert sc[1].islanding


def test_sensitivity_threshold_drops_weak_scenarios():
    ds = load_fixture("three_node_ring")
    topo = build_topology(ds)
    o = Options()
    o.contingency.enabled = True
    o.contingency.sensitivity_threshold = 1.01
    assert enumerate_contingencies(topo, o) == []


def test_security_constraints_layout():
    case_ds = load_fixture("three_node_ring")
    topo = build_topology(case_ds)
    ptdf = compute_ptdf(topo)
    o = Options()
    o.contingency.enabled = True
    sc = enumerate_contingencies(topo, o, ptdf)
    g = build_security_constraints(ptdf, sc)
    # 3 lines, 2 directions, basecase + 3 outages; the outaged line's own rows are zero
    assert len(g) == 4 * 2 * 3
    zero = ~np.any(g.A, axis=1)
    assert sorted({(g.line[k], g.scenario[k]) for k in np.flatnonzero(zero)}) == [("l12", "l12"), ("l13", "l13"), ("l23", "l23")]
    assert g.scenario[:6] == [BASECASE] * 6
    np.testing.assert_allclose(g.A[:3], ptdf.matrix)
    np.testing.assert_allclose(g.A[3:6], -ptdf.matrix)
    sub = g.subset([0, 4])
    assert sub.reduced and sub.essential.tolist() == [0, 4] and sub.n_full == len(g)
