import dataclasses
import json

import numpy as np
import pytest

from conftest import SMALL, get_case
from gridmarket.dataio import Options, load_fixture, options_from_dict
from gridmarket.grid import build_security_constraints, build_topology, compute_ptdf
from gridmarket.market import (
    SYSTEM,
    MarketConfig,
    MarketError,
    build_dispatch,
    overloaded_lines_n0,
    overloaded_lines_n1,
    redispatch_quantity,
    run_market,
    run_redispatch,
    write_results,
)


@pytest.fixture
def two_node():
    ds = load_fixture("two_node")
    ptdf = compute_ptdf(build_topology(ds))
    return ds, ptdf, build_security_constraints(ptdf)


def test_two_node_nodal(two_node):
    ds, ptdf, g0 = two_node
    r = run_market(ds, g0, MarketConfig("nodal", ptdf=ptdf))
    assert r.objective == pytest.approx(3000, abs=1e-6)
    np.testing.assert_allclose(r.G.ravel(), [50, 50], atol=1e-6)
    assert r.price("n1", 0) == pytest.approx(10, abs=1e-6)
    assert r.price("n2", 0) == pytest.approx(50, abs=1e-6)
    np.testing.assert_allclose(r.flows.ravel(), [50], atol=1e-6)
    assert overloaded_lines_n0(r, ptdf) == []


def test_two_node_copper_plate(two_node):
    ds, ptdf, _ = two_node
    r = run_market(ds, None, MarketConfig("copper_plate"))
    assert r.objective == pytest.approx(1000)
    np.testing.assert_allclose(r.G.ravel(), [100, 0], atol=1e-6)
    assert r.price_ids == [SYSTEM]
    # the marginal plant sits exactly at its limit, so any price in [10, 50] is a valid dual
    assert 10 - 1e-6 <= r.price(SYSTEM, 0) <= 50 + 1e-6
    over = overloaded_lines_n0(r, ptdf)
    assert len(over) == 1 and over[0][:2] == ("l1", 0) and over[0][2] == pytest.approx(50)


def test_two_node_zonal_ntc(two_node):
    ds, _, _ = two_node
    r = run_market(ds, None, MarketConfig("zonal_ntc"))
    assert r.objective == pytest.approx(3000)
    np.testing.assert_allclose(r.net_positions.ravel(), [50, -50], atol=1e-6)


def test_redispatch_two_node(two_node):
    ds, ptdf, g0 = two_node
    o = Options()
    o.redispatch.include = True
    mkt = run_market(ds, None, MarketConfig("copper_plate", options=o))
    rd = run_redispatch(ds, g0, mkt, o, ptdf)
    np.testing.assert_allclose(rd.G.ravel(), [50, 50], atol=1e-6)
    assert redispatch_quantity(mkt, rd) == pytest.approx(100)
    assert overloaded_lines_n0(rd, ptdf) == []
    # market costs plus 50 /MWh on each of the 100 MWh moved
    assert rd.objective == pytest.approx(3000 + 50 * 100)


def test_redispatch_keeps_area_balance():
    case = get_case("case30.m")
    mkt = run_market(case.dataset, None, MarketConfig("zonal_ntc", options=case.options))
    rd = run_redispatch(case.dataset, case.n0, mkt, case.options, case.ptdf)
    np.testing.assert_allclose(rd.area_balance, mkt.area_balance, atol=1e-6)


def test_ring_n1_curtails():
    case = get_case("three_node_ring")
    r = run_market(case.dataset, case.n1, MarketConfig("nodal", True, options=case.options, ptdf=case.ptdf))
    np.testing.assert_allclose(r.CURT.ravel(), [10, 0, 0], atol=1e-6)
    assert r.costs["COST_CURT"] == pytest.approx(10 * case.options.curtailment_cost)
    assert overloaded_lines_n1(r, case.ptdf, case.scenarios) == []


def test_storage_and_heat_invariants():
    ds = load_fixture("storage_heat")
    T = len(ds.timesteps)
    o = options_from_dict({"model_horizon": [0, T]})
    ptdf = compute_ptdf(build_topology(ds))
    r = run_market(ds, build_security_constraints(ptdf), MarketConfig("nodal", options=o, ptdf=ptdf))
    plants = {p.id: p for p in ds.plants}
    i = r.plant_ids.index("battery")
    bat = plants["battery"]
    level = 0.5 * bat.storage_capacity
    for k in range(T):
        level = level + bat.eta * r.CH[i, k] - r.G[i, k]
        assert r.L[i, k] == pytest.approx(level, abs=1e-6)
        assert -1e-9 <= r.L[i, k] <= bat.storage_capacity + 1e-9
    assert r.L[i, -1] == pytest.approx(0.5 * bat.storage_capacity, abs=1e-6)
    c = r.plant_ids.index("chp")
    np.testing.assert_allclose(r.G[c], plants["chp"].chp_ratio * r.H[c], atol=1e-6)
    heat = ds.heat_demand_matrix([*range(T)])[0]
    np.testing.assert_allclose(r.H.sum(axis=0) + r.heat_shortage.sum(axis=0), heat, atol=1e-6)
    w = r.plant_ids.index("wind")
    avail = ds.availability_matrix()[w] * plants["wind"].g_max
    assert np.all(r.G[w] <= avail + 1e-6)
    # nodal balance
    demand = ds.demand_matrix()
    np.testing.assert_allclose(r.injections.sum(axis=0), 0, atol=1e-6)
    assert r.infeasibility == pytest.approx(0)
    assert demand.shape == (3, T)


def test_shortage_uses_penalised_slack():
    ds = load_fixture("two_node")
    ds.demand["n2"][0] = 250.0
    ds.validate()
    r = run_market(ds, None, MarketConfig("copper_plate"))
    assert r.infeasibility + r.CURT.sum() == pytest.approx(50)


@pytest.mark.parametrize("name", SMALL)
def test_objective_ordering(name):
    case = get_case(name)
    o = case.options
    objs = [
        run_market(case.dataset, None, MarketConfig("copper_plate", options=o)).objective,
        run_market(case.dataset, None, MarketConfig("zonal_ntc", options=o)).objective,
        run_market(case.dataset, case.n0, MarketConfig("nodal", options=o, ptdf=case.ptdf)).objective,
        run_market(case.dataset, case.n1, MarketConfig("nodal", True, options=o, ptdf=case.ptdf)).objective,
    ]
    assert all(a <= b + 1e-6 * (1 + abs(b)) for a, b in zip(objs, objs[1:])), objs


def test_lazy_network_rows_match_counts(two_node):
    ds, ptdf, g0 = two_node
    prob = build_dispatch(ds, g0, MarketConfig("nodal", ptdf=ptdf))
    counts = prob.counts()
    assert counts["var:G"] == 2 and counts["network"] == 2


def test_grid_mismatch_rejected(two_node):
    ds, ptdf, g0 = two_node
    with pytest.raises(MarketError):
        run_market(ds, None, MarketConfig("nodal"))
    ring = get_case("three_node_ring")
    with pytest.raises(MarketError):
        run_market(ds, ring.n0, MarketConfig("nodal"))


def test_overloads_need_flows(two_node):
    ds, ptdf, _ = two_node
    r = run_market(ds, None, MarketConfig("copper_plate"))
    with pytest.raises(MarketError):
        overloaded_lines_n0(dataclasses.replace(r, flows=None), ptdf)


def test_no_scenarios_no_n1_overloads(two_node):
    ds, ptdf, _ = two_node
    r = run_market(ds, None, MarketConfig("copper_plate"))
    assert overloaded_lines_n1(r, ptdf, []) == []


def test_write_results(tmp_path, two_node):
    ds, ptdf, g0 = two_node
    r = run_market(ds, g0, MarketConfig("nodal", ptdf=ptdf))
    paths = write_results(r, tmp_path)
    names = sorted(p.rsplit("/", 1)[-1] for p in paths)
    assert "G.csv" in names and "objective.json" in names and "prices.csv" in names
    doc = json.loads((tmp_path / "objective.json").read_text())
    assert doc["objective"] == pytest.approx(3000)
    assert (tmp_path / "G.csv").read_text().splitlines()[1:] == ["p1,0,50", "p2,0,50"]
