"""Dispatch LP under a grid representation, the redispatch stage and overload analytics.

Balances are written as ``generation - charge + curtailment + slacks - exchange = demand``
so the dual of each balance is the price of demand at that node or area.

Network rows (PTDF or flow-based) are handed to the solver as lazy rows and
enter the simplex only when violated, which keeps N-1 constraint sets with
tens of thousands of rows tractable.
"""
from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from gridmarket.dataio import MARKET_TYPES, Options
from gridmarket.grid import (
    BASECASE,
    GridError,
    PtdfMatrix,
    Topology,
    build_topology,
    compute_flows,
    compute_lodf,
    compute_ptdf,
)
from gridmarket.solver import OPTIMAL, LazyRows, LinearProgram, solve_lp

log = logging.getLogger(__name__)

OVERLOAD_TOL = 1e-6
SLACK_TOL = 1e-6
SYSTEM = "system"


class MarketError(RuntimeError):
    """Model construction or solve failure, with the stage in the message."""


@dataclass
class MarketConfig:
    """Representation, security flag and horizon of one market run.

    ``fb_parameters`` is required for ``zonal_fbmc``; ``ptdf`` is optional and
    only saves recomputing it for the reported flows.
    """

    representation: str = "nodal"
    security: bool = False
    timesteps: list | None = None
    options: Options = field(default_factory=Options)
    fb_parameters: object = None
    ptdf: PtdfMatrix | None = None

    def __post_init__(self):
        if self.representation not in MARKET_TYPES:
            raise MarketError(f"unknown representation {self.representation!r}")
        if self.representation == "zonal_fbmc" and self.fb_parameters is None:
            raise MarketError("zonal_fbmc needs flow-based parameters")
        if self.timesteps is None:
            self.timesteps = self.options.timesteps
        self.timesteps = [int(t) for t in self.timesteps]

    @classmethod
    def from_options(cls, options: Options, fb_parameters=None, ptdf=None):
        return cls(options.type, options.contingency.enabled, None, options, fb_parameters, ptdf)


@dataclass
class DispatchProblem:
    """The dispatch LP with index maps back to model symbols.

    ``var[name]`` and ``row[name]`` are integer arrays shaped
    ``(entities, timesteps)`` holding LP positions, ``-1`` where a symbol does
    not exist (e.g. CH for a non-storage plant).
    """

    lp: LinearProgram
    lazy: list
    representation: str
    stage: str
    timesteps: list
    plant_ids: list
    node_ids: list
    balance_ids: list
    areas: dict
    var: dict
    row: dict
    lazy_ids: list = field(default_factory=list)
    pairs: list = field(default_factory=list)

    def counts(self):
        out = {f"var:{k}": int((v >= 0).sum()) for k, v in self.var.items()}
        out.update({f"row:{k}": int((v >= 0).sum()) for k, v in self.row.items()})
        out["network"] = int(sum(len(block.rhs) for block in self.lazy))
        return out


@dataclass
class DispatchResult:
    stage: str
    representation: str
    timesteps: list
    plant_ids: list
    node_ids: list
    zone_ids: list
    line_ids: list
    G: np.ndarray
    H: np.ndarray
    CH: np.ndarray
    DIS: np.ndarray
    L: np.ndarray
    CURT: np.ndarray
    infeas_ids: list
    INFEAS_pos: np.ndarray
    INFEAS_neg: np.ndarray
    heat_ids: list
    heat_shortage: np.ndarray
    injections: np.ndarray
    flows: np.ndarray | None
    net_positions: np.ndarray
    areas: dict
    area_balance: np.ndarray
    price_ids: list
    prices: np.ndarray
    objective: float
    costs: dict
    delta_pos: np.ndarray | None = None
    delta_neg: np.ndarray | None = None
    exchange: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    iterations: int = 0
    lazy_added: int = 0

    @property
    def net_output(self):
        """Plant output net of storage charging, MW."""
        return self.G - self.CH

    @property
    def infeasibility(self):
        return float(self.INFEAS_pos.sum() + self.INFEAS_neg.sum() + self.heat_shortage.sum())

    def price(self, label, t=None):
        k = self.price_ids.index(label)
        return self.prices[k] if t is None else float(self.prices[k, self.timesteps.index(t)])


# ------------------------------------------------------------------ building
def _block(lp, prefix, labels, timesteps, lower, upper, cost):
    """Add one variable per (label, t); returns the index array (labels x T)."""
    n, T = len(labels), len(timesteps)
    if n == 0:
        return np.full((0, T), -1, dtype=np.int64)
    names = [f"{prefix}[{a},{t}]" for a in labels for t in timesteps]
    lo = np.broadcast_to(np.asarray(lower, float), (n, T)).ravel()
    hi = np.broadcast_to(np.asarray(upper, float), (n, T)).ravel()
    c = np.broadcast_to(np.asarray(cost, float), (n, T)).ravel()
    return lp.add_variables(names, lo, hi, c).reshape(n, T)


def _scatter(idx, mask, T):
    full = np.full((len(mask), T), -1, dtype=np.int64)
    full[mask] = idx
    return full


def _check_grid(grid_rep, config, n_nodes):
    kind = config.representation
    if grid_rep is not None and grid_rep.space == "nodal" and grid_rep.A.shape[1] != n_nodes:
        raise MarketError(f"grid representation covers {grid_rep.A.shape[1]} nodes, the dataset has {n_nodes}")
    if kind == "nodal":
        if grid_rep is None or grid_rep.space != "nodal":
            raise MarketError("nodal representation needs a nodal GridRepresentation")
        contingent = any(s != BASECASE for s in grid_rep.scenario)
        if contingent and not config.security:
            raise MarketError("grid representation carries N-1 rows but security is disabled")
        if config.security and not contingent and grid_rep.scenarios:
            raise MarketError("security requested but the grid representation has no contingency rows")
    elif grid_rep is not None and kind in ("copper_plate", "zonal_ntc"):
        raise MarketError(f"{kind} takes no network rows; got a {grid_rep.space} GridRepresentation")
    elif kind == "zonal_fbmc" and grid_rep is not None and grid_rep.space != "zonal":
        raise MarketError("zonal_fbmc takes its rows from the flow-based parameters, not a nodal grid")


def build_dispatch(dataset, grid_rep, config: MarketConfig, market_result=None) -> DispatchProblem:
    """Assemble the dispatch LP.

    With ``market_result`` the problem is the redispatch stage: nodal
    balances and network rows, net plant output tied to the market schedule
    through ``delta+`` / ``delta-`` at the redispatch cost, and the balance of
    every market area fixed to its market value.
    """
    redispatch = market_result is not None
    kind = "nodal" if redispatch else config.representation
    if not redispatch:
        _check_grid(grid_rep, config, len(dataset.nodes))
    elif grid_rep is None or grid_rep.space != "nodal":
        raise MarketError("redispatch needs a nodal GridRepresentation")
    elif grid_rep.A.shape[1] != len(dataset.nodes):
        raise MarketError(f"grid representation covers {grid_rep.A.shape[1]} nodes, the dataset has {len(dataset.nodes)}")
    opt = config.options
    ts = list(config.timesteps)
    T = len(ts)
    if T == 0:
        raise MarketError("empty model horizon")
    if redispatch and list(market_result.timesteps) != ts:
        raise MarketError("redispatch horizon differs from the market result horizon")

    plants = dataset.plants
    node_ids = dataset.node_ids()
    zone_ids = dataset.zone_ids()
    node_pos = {n: i for i, n in enumerate(node_ids)}
    node_zone = [n.zone for n in dataset.nodes]
    demand = dataset.demand_matrix(ts)
    avail = dataset.availability_matrix(ts)
    heat_areas = dataset.heat_areas()
    heat_dem = dataset.heat_demand_matrix(ts)
    pids = [p.id for p in plants]
    P = len(plants)

    lp = LinearProgram()
    var, row = {}, {}

    # generation, storage and heat
    has_g = np.array([p.g_max > 0 or p.is_storage for p in plants], bool)
    gmax = np.array([p.g_max for p in plants], float)
    mc = np.array([p.mc_el for p in plants], float)
    gi = [i for i in range(P) if has_g[i]]
    var["G"] = _scatter(
        _block(lp, "G", [pids[i] for i in gi], ts, 0.0, avail[gi] * gmax[gi, None], mc[gi, None]), has_g, T
    )
    sto = np.array([p.is_storage for p in plants], bool)
    si = np.flatnonzero(sto)
    var["CH"] = _scatter(_block(lp, "CH", [pids[i] for i in si], ts, 0.0, gmax[si, None], 0.0), sto, T)
    cap = np.array([p.storage_capacity for p in plants], float)
    var["L"] = _scatter(_block(lp, "L", [pids[i] for i in si], ts, 0.0, cap[si, None], 0.0), sto, T)
    heat = np.array([p.h_max > 0 for p in plants], bool)
    hi_ = np.flatnonzero(heat)
    hcost = np.array([p.mc_el if p.is_heat_only else 0.0 for p in plants], float)
    hmax = np.array([p.h_max for p in plants], float)
    var["H"] = _scatter(_block(lp, "H", [pids[i] for i in hi_], ts, 0.0, hmax[hi_, None], hcost[hi_, None]), heat, T)

    row["chp"] = np.full((P, T), -1, dtype=np.int64)
    for i, p in enumerate(plants):
        if not p.is_chp:
            continue
        for k, t in enumerate(ts):
            cols = [var["H"][i, k]]
            coef = [-p.chp_ratio]
            if var["G"][i, k] >= 0:
                cols.append(var["G"][i, k])
                coef.append(1.0)
            row["chp"][i, k] = lp.add_constraint(f"chp[{p.id},{t}]", cols, coef, "=", 0.0)

    row["storage"] = np.full((P, T), -1, dtype=np.int64)
    row["storage_end"] = np.full((P, 1), -1, dtype=np.int64)
    for i in si:
        p = plants[i]
        eta = p.eta if p.eta is not None else 1.0
        for k, t in enumerate(ts):
            cols = [var["L"][i, k], var["CH"][i, k], var["G"][i, k]]
            coef = [1.0, -eta, 1.0]
            rhs = 0.5 * p.storage_capacity if k == 0 else 0.0
            if k > 0:
                cols.append(var["L"][i, k - 1])
                coef.append(-1.0)
            row["storage"][i, k] = lp.add_constraint(f"storage[{p.id},{t}]", cols, coef, "=", rhs)
        row["storage_end"][i, 0] = lp.add_constraint(
            f"storage_end[{p.id}]", [var["L"][i, T - 1]], [1.0], "=", 0.5 * p.storage_capacity
        )

    penalty = opt.infeasibility_penalty
    var["HEAT_SLACK"] = _block(lp, "HEAT_SLACK", heat_areas, ts, 0.0, np.inf, penalty)
    row["heat"] = np.full((len(heat_areas), T), -1, dtype=np.int64)
    for a, area in enumerate(heat_areas):
        members = [i for i in hi_ if plants[i].heat_area == area]
        for k, t in enumerate(ts):
            cols = [var["H"][i, k] for i in members] + [var["HEAT_SLACK"][a, k]]
            row["heat"][a, k] = lp.add_constraint(
                f"heat[{area},{t}]", cols, np.ones(len(cols)), "=", heat_dem[a, k]
            )

    # load curtailment, only where there is load
    has_load = demand > 0
    var["CURT"] = np.full(demand.shape, -1, dtype=np.int64)
    for n, k in zip(*np.nonzero(has_load)):
        var["CURT"][n, k] = lp.add_variable(
            f"CURT[{node_ids[n]},{ts[k]}]", 0.0, demand[n, k], opt.curtailment_cost
        )

    # balance entities
    if kind == "nodal":
        balance_ids = list(node_ids)
        members = [[n] for n in range(len(node_ids))]
    elif kind == "copper_plate":
        balance_ids = [SYSTEM]
        members = [list(range(len(node_ids)))]
    else:
        balance_ids = list(zone_ids)
        members = [[n for n in range(len(node_ids)) if node_zone[n] == z] for z in zone_ids]
    var["INFEAS_pos"] = _block(lp, "INFEAS_pos", balance_ids, ts, 0.0, np.inf, penalty)
    var["INFEAS_neg"] = _block(lp, "INFEAS_neg", balance_ids, ts, 0.0, np.inf, penalty)

    plants_at = [[] for _ in node_ids]
    for i, p in enumerate(plants):
        plants_at[node_pos[p.node]].append(i)

    lazy, lazy_ids = [], []
    if kind == "nodal":
        # the bounds the constraint reduction assumes; never binding without balance slack
        bound = dataset.injection_bounds()[:, None]
        var["INJ"] = _block(lp, "INJ", node_ids, ts, -bound, bound, 0.0)
    if kind == "zonal_ntc":
        pairs = [(a, b) for a in zone_ids for b in zone_ids if a != b and dataset.ntc_capacity(a, b) > 0]
        labels = [f"{a}>{b}" for a, b in pairs]
        ntc = np.array([dataset.ntc_capacity(a, b) for a, b in pairs], float).reshape(-1, 1)
        var["EX"] = _block(lp, "EX", labels, ts, 0.0, ntc if len(pairs) else 0.0, 0.0)
    else:
        pairs = []
    if kind == "zonal_fbmc":
        fb = config.fb_parameters
        missing = [z for z in zone_ids if z not in fb.zones]
        if missing:
            raise MarketError(f"flow-based parameters lack zones {missing}")
        var["NP"] = _block(lp, "NP", zone_ids, ts, -np.inf, np.inf, 0.0)

    row["balance"] = np.full((len(balance_ids), T), -1, dtype=np.int64)
    for a, bid in enumerate(balance_ids):
        nodes = members[a]
        pl = [i for n in nodes for i in plants_at[n]]
        for k, t in enumerate(ts):
            cols, coef = [], []
            for i in pl:
                if var["G"][i, k] >= 0:
                    cols.append(var["G"][i, k])
                    coef.append(1.0)
                if var["CH"][i, k] >= 0:
                    cols.append(var["CH"][i, k])
                    coef.append(-1.0)
            for n in nodes:
                if var["CURT"][n, k] >= 0:
                    cols.append(var["CURT"][n, k])
                    coef.append(1.0)
            cols += [var["INFEAS_pos"][a, k], var["INFEAS_neg"][a, k]]
            coef += [1.0, -1.0]
            if kind == "nodal":
                cols.append(var["INJ"][nodes[0], k])
                coef.append(-1.0)
            for e, (za, zb) in enumerate(pairs):
                if za == bid:
                    cols.append(var["EX"][e, k])
                    coef.append(-1.0)
                elif zb == bid:
                    cols.append(var["EX"][e, k])
                    coef.append(1.0)
            if kind == "zonal_fbmc":
                cols.append(var["NP"][a, k])
                coef.append(-1.0)
            rhs = float(demand[nodes, k].sum()) if nodes else 0.0
            row["balance"][a, k] = lp.add_constraint(f"balance[{bid},{t}]", cols, coef, "=", rhs)

    if kind == "nodal":
        topo = build_topology(dataset)
        comps = topo.components
        fix_areas = market_result.areas if redispatch else None
        if not redispatch or len(comps) > 1:
            row["component"] = np.full((len(comps), T), -1, dtype=np.int64)
            for c, comp in enumerate(comps):
                for k, t in enumerate(ts):
                    row["component"][c, k] = lp.add_constraint(
                        f"component[{c},{t}]", var["INJ"][comp, k], 1.0, "=", 0.0
                    )
        if redispatch:
            area_ids = list(fix_areas)
            row["area_fix"] = np.full((len(area_ids), T), -1, dtype=np.int64)
            for a, area in enumerate(area_ids):
                idx = [node_pos[n] for n in fix_areas[area]]
                for k, t in enumerate(ts):
                    row["area_fix"][a, k] = lp.add_constraint(
                        f"area_fix[{area},{t}]", var["INJ"][idx, k], 1.0, "=", market_result.area_balance[a, k]
                    )
        if len(grid_rep):
            for k, t in enumerate(ts):
                lazy.append(LazyRows(var["INJ"][:, k], grid_rep.A, grid_rep.b, f"network[{t}]"))
                lazy_ids.append(grid_rep.ids)
    if kind == "zonal_fbmc":
        row["np_sum"] = np.full((1, T), -1, dtype=np.int64)
        for k, t in enumerate(ts):
            row["np_sum"][0, k] = lp.add_constraint(f"np_sum[{t}]", var["NP"][:, k], 1.0, "=", 0.0)
        order = [zone_ids.index(z) for z in fb.zones]
        for k, t in enumerate(ts):
            Z, ram = fb.rows(t)
            if len(ram):
                lazy.append(LazyRows(var["NP"][order, k], Z, ram, f"fb[{t}]"))
                lazy_ids.append(list(fb.ids))

    if redispatch:
        if list(market_result.plant_ids) != pids:
            raise MarketError("market result plants differ from the dataset")
        cost = opt.redispatch.cost
        gi_all = np.flatnonzero(has_g)
        var["DELTA_pos"] = _scatter(_block(lp, "DELTA_pos", [pids[i] for i in gi_all], ts, 0.0, np.inf, cost), has_g, T)
        var["DELTA_neg"] = _scatter(_block(lp, "DELTA_neg", [pids[i] for i in gi_all], ts, 0.0, np.inf, cost), has_g, T)
        row["delta"] = np.full((P, T), -1, dtype=np.int64)
        net_mkt = market_result.net_output
        for i in gi_all:
            for k, t in enumerate(ts):
                cols = [var["G"][i, k], var["DELTA_pos"][i, k], var["DELTA_neg"][i, k]]
                coef = [1.0, -1.0, 1.0]
                if var["CH"][i, k] >= 0:
                    cols.append(var["CH"][i, k])
                    coef.append(-1.0)
                row["delta"][i, k] = lp.add_constraint(f"delta[{pids[i]},{t}]", cols, coef, "=", net_mkt[i, k])

    if kind == "nodal" and not redispatch:
        areas = {z: [node_ids[n] for n in range(len(node_ids)) if node_zone[n] == z] for z in zone_ids}
    elif redispatch:
        areas = dict(market_result.areas)
    else:
        areas = {bid: [node_ids[n] for n in members[a]] for a, bid in enumerate(balance_ids)}
    return DispatchProblem(
        lp,
        lazy,
        config.representation if not redispatch else "nodal",
        "redispatch" if redispatch else "market",
        ts,
        pids,
        node_ids,
        balance_ids,
        areas,
        var,
        row,
        lazy_ids,
        pairs,
    )


# ------------------------------------------------------------------- solving
def _values(x, idx):
    out = np.zeros(idx.shape)
    mask = idx >= 0
    out[mask] = x[idx[mask]]
    return out


def _solve(problem: DispatchProblem, stage):
    sol = solve_lp(problem.lp, lazy=problem.lazy)
    if sol.status != OPTIMAL:
        raise MarketError(f"{stage} LP ended with status {sol.status}")
    return sol


def _result(dataset, problem: DispatchProblem, sol, config: MarketConfig) -> DispatchResult:
    opt = config.options
    ts = problem.timesteps
    x = sol.x
    var = problem.var
    G = np.clip(_values(x, var["G"]), 0.0, None)
    CH = np.clip(_values(x, var["CH"]), 0.0, None)
    H = np.clip(_values(x, var["H"]), 0.0, None)
    L = _values(x, var["L"])
    CURT = np.clip(_values(x, var["CURT"]), 0.0, None)
    inf_pos = np.clip(_values(x, var["INFEAS_pos"]), 0.0, None)
    inf_neg = np.clip(_values(x, var["INFEAS_neg"]), 0.0, None)
    heat_short = np.clip(_values(x, var["HEAT_SLACK"]), 0.0, None)
    sto = np.array([p.is_storage for p in dataset.plants], bool)
    DIS = np.where(sto[:, None], G, 0.0)

    node_ids = problem.node_ids
    node_pos = {n: i for i, n in enumerate(node_ids)}
    demand = dataset.demand_matrix(ts)
    sched = -demand + CURT
    for i, p in enumerate(dataset.plants):
        sched[node_pos[p.node]] += G[i] - CH[i]
    nodal = "INJ" in var
    if nodal:
        injections = _values(x, var["INJ"])
    else:
        injections = sched

    # balance of each area, including the area's own infeasibility slack
    area_ids = list(problem.areas)
    area_balance = np.zeros((len(area_ids), len(ts)))
    for a, area in enumerate(area_ids):
        idx = [node_pos[n] for n in problem.areas[area]]
        area_balance[a] = injections[idx].sum(axis=0)
        if not nodal and area in problem.balance_ids:
            b = problem.balance_ids.index(area)
            area_balance[a] += inf_pos[b] - inf_neg[b]

    zone_ids = dataset.zone_ids()
    zone_of = [n.zone for n in dataset.nodes]
    exchange = {}
    if "EX" in var:
        for e, (za, zb) in enumerate(problem.pairs):
            exchange[(za, zb)] = _values(x, var["EX"][e : e + 1])[0]
    if "NP" in var:
        net_positions = _values(x, var["NP"])
    elif exchange:
        net_positions = np.zeros((len(zone_ids), len(ts)))
        for (za, zb), v in exchange.items():
            net_positions[zone_ids.index(za)] += v
            net_positions[zone_ids.index(zb)] -= v
    else:
        net_positions = np.array(
            [injections[[i for i, z in enumerate(zone_of) if z == zone]].sum(axis=0) for zone in zone_ids]
        ).reshape(len(zone_ids), len(ts))

    ptdf = config.ptdf if config.ptdf is not None else compute_ptdf(build_topology(dataset))
    try:
        flows = compute_flows(ptdf, injections)
    except GridError as exc:
        flows = None
        log.info("no nodal flows for the %s result: %s", config.representation, exc)

    y = sol.duals
    prices = np.array(
        [[y[r] for r in problem.row["balance"][a]] for a in range(len(problem.balance_ids))]
    ).reshape(len(problem.balance_ids), len(ts))

    mc = np.array([p.mc_el for p in dataset.plants], float)
    hcost = np.array([p.mc_el if p.is_heat_only else 0.0 for p in dataset.plants], float)
    costs = {
        "COST_G": float((mc[:, None] * G).sum()),
        "COST_H": float((hcost[:, None] * H).sum()),
        "COST_CURT": float(opt.curtailment_cost * CURT.sum()),
        "OOM_PEN": float(opt.infeasibility_penalty * (inf_pos.sum() + inf_neg.sum() + heat_short.sum())),
    }
    dpos = dneg = None
    if "DELTA_pos" in var:
        dpos = np.clip(_values(x, var["DELTA_pos"]), 0.0, None)
        dneg = np.clip(_values(x, var["DELTA_neg"]), 0.0, None)
        costs["REDISPATCH"] = float(opt.redispatch.cost * (dpos.sum() + dneg.sum()))
        costs["OOM_PEN"] += costs["REDISPATCH"]

    warnings = []
    slack = float(inf_pos.sum() + inf_neg.sum())
    if slack > SLACK_TOL:
        msg = f"INFEASIBILITY: {slack:.6g} MW of balance slack used in the {problem.stage} stage"
        log.warning(msg)
        warnings.append(msg)
    if heat_short.sum() > SLACK_TOL:
        msg = f"INFEASIBILITY: {heat_short.sum():.6g} MWth of heat demand not served in the {problem.stage} stage"
        log.warning(msg)
        warnings.append(msg)
    if CURT.sum() > SLACK_TOL:
        msg = f"{CURT.sum():.6g} MWh of load curtailed at {opt.curtailment_cost:g} per MWh"
        log.warning(msg)
        warnings.append(msg)

    return DispatchResult(
        stage=problem.stage,
        representation=problem.representation,
        timesteps=list(ts),
        plant_ids=list(problem.plant_ids),
        node_ids=list(node_ids),
        zone_ids=list(zone_ids),
        line_ids=list(ptdf.topology.line_ids),
        G=G,
        H=H,
        CH=CH,
        DIS=DIS,
        L=L,
        CURT=CURT,
        infeas_ids=list(problem.balance_ids),
        INFEAS_pos=inf_pos,
        INFEAS_neg=inf_neg,
        heat_ids=dataset.heat_areas(),
        heat_shortage=heat_short,
        injections=injections,
        flows=flows,
        net_positions=net_positions,
        areas=dict(problem.areas),
        area_balance=area_balance,
        price_ids=list(problem.balance_ids),
        prices=prices,
        objective=float(sol.objective),
        costs=costs,
        delta_pos=dpos,
        delta_neg=dneg,
        exchange=exchange,
        warnings=warnings,
        iterations=sol.iterations,
        lazy_added=sol.lazy_added,
    )


def run_market(dataset, grid_rep, config: MarketConfig) -> DispatchResult:
    """Solve the market stage and map the solution back to schedules, prices and flows."""
    problem = build_dispatch(dataset, grid_rep, config)
    sol = _solve(problem, f"market ({config.representation})")
    return _result(dataset, problem, sol, config)


def run_redispatch(dataset, nodal_grid_rep, market_result: DispatchResult, options: Options, ptdf=None) -> DispatchResult:
    """Least-cost change of the market schedule that satisfies the nodal grid.

    The balance of each market area (zones, or the whole system for a copper
    plate market) stays at its market value.
    """
    security = any(s != BASECASE for s in nodal_grid_rep.scenario)
    config = MarketConfig("nodal", security, market_result.timesteps, options, None, ptdf)
    problem = build_dispatch(dataset, nodal_grid_rep, config, market_result=market_result)
    sol = _solve(problem, "redispatch")
    return _result(dataset, problem, sol, config)


# ----------------------------------------------------------------- analytics
def _as_ptdf(grid):
    if isinstance(grid, PtdfMatrix):
        return grid
    if isinstance(grid, Topology):
        return compute_ptdf(grid)
    raise TypeError("grid must be a PtdfMatrix or a Topology")


def _nodal_flows(result, ptdf):
    if result.flows is None:
        raise MarketError(
            f"the {result.representation} {result.stage} result has no balanced nodal injections; "
            "check flows on the redispatch stage instead"
        )
    try:
        return compute_flows(ptdf, result.injections)
    except GridError as exc:
        raise MarketError(str(exc)) from None


def overloaded_lines_n0(result: DispatchResult, grid) -> list:
    """``(line, timestep, overload MW)`` for every basecase flow above capacity."""
    ptdf = _as_ptdf(grid)
    f = _nodal_flows(result, ptdf)
    cap = ptdf.topology.capacity
    over = np.abs(f) - cap[:, None]
    out = []
    for l, k in zip(*np.nonzero(over > OVERLOAD_TOL)):
        out.append((ptdf.topology.line_ids[l], result.timesteps[k], float(over[l, k])))
    return out


def overloaded_lines_n1(result: DispatchResult, grid, scenarios) -> list:
    """``(line, scenario, timestep, overload MW)`` for post-contingency flows above capacity.

    Islanding scenarios are skipped.
    """
    ptdf = _as_ptdf(grid)
    topo = ptdf.topology
    f = _nodal_flows(result, ptdf)
    cap = topo.capacity
    out = []
    for sc in scenarios:
        if sc.islanding:
            continue
        lodf = compute_lodf(ptdf, topo, sc.lines)
        if lodf.islanding:
            continue
        post = f + lodf.matrix @ f[lodf.outage]
        over = np.abs(post) - cap[:, None]
        over[lodf.outage] = -np.inf
        for l, k in zip(*np.nonzero(over > OVERLOAD_TOL)):
            out.append((topo.line_ids[l], sc.id, result.timesteps[k], float(over[l, k])))
    return out


def redispatch_quantity(market_result: DispatchResult, redispatch_result: DispatchResult) -> float:
    """Total change of net plant output in MWh."""
    if market_result.plant_ids != redispatch_result.plant_ids:
        raise MarketError("results cover different plants")
    if market_result.timesteps != redispatch_result.timesteps:
        raise MarketError("results cover different horizons")
    return float(np.abs(redispatch_result.net_output - market_result.net_output).sum())


# ------------------------------------------------------------------- output
def _fmt(v):
    v = float(v)
    if v == 0.0 or abs(v) < 1e-12:
        return "0"
    return format(v, ".10g")


def _write(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def write_results(result: DispatchResult, out_dir, prefix="") -> list:
    """CSV tables and ``objective.json`` for one result; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    ts = result.timesteps
    path = lambda name: os.path.join(out_dir, prefix + name)  # noqa: E731
    out = [
        _write(
            path("G.csv"),
            ["plant", "timestep", "value"],
            [(p, t, _fmt(result.G[i, k])) for i, p in enumerate(result.plant_ids) for k, t in enumerate(ts)],
        )
    ]
    heat_rows = [
        (p, t, _fmt(result.H[i, k]))
        for i, p in enumerate(result.plant_ids)
        if np.any(result.H[i])
        for k, t in enumerate(ts)
    ]
    out.append(_write(path("H.csv"), ["plant", "timestep", "value"], heat_rows))
    sto = [i for i in range(len(result.plant_ids)) if np.any(result.L[i]) or np.any(result.CH[i])]
    out.append(
        _write(
            path("storage.csv"),
            ["plant", "timestep", "charge", "discharge", "level"],
            [
                (result.plant_ids[i], t, _fmt(result.CH[i, k]), _fmt(result.DIS[i, k]), _fmt(result.L[i, k]))
                for i in sto
                for k, t in enumerate(ts)
            ],
        )
    )
    out.append(
        _write(
            path("curtailment.csv"),
            ["node", "timestep", "value"],
            [(n, t, _fmt(result.CURT[i, k])) for i, n in enumerate(result.node_ids) for k, t in enumerate(ts)],
        )
    )
    if result.flows is not None:
        out.append(
            _write(
                path("flows_n0.csv"),
                ["line", "timestep", "flow"],
                [(l, t, _fmt(result.flows[i, k])) for i, l in enumerate(result.line_ids) for k, t in enumerate(ts)],
            )
        )
    out.append(
        _write(
            path("net_positions.csv"),
            ["zone", "timestep", "value"],
            [(z, t, _fmt(result.net_positions[i, k])) for i, z in enumerate(result.zone_ids) for k, t in enumerate(ts)],
        )
    )
    out.append(
        _write(
            path("prices.csv"),
            ["area", "timestep", "price"],
            [(a, t, _fmt(result.prices[i, k])) for i, a in enumerate(result.price_ids) for k, t in enumerate(ts)],
        )
    )
    if result.delta_pos is not None:
        out.append(
            _write(
                path("redispatch.csv"),
                ["plant", "timestep", "delta_pos", "delta_neg"],
                [
                    (p, t, _fmt(result.delta_pos[i, k]), _fmt(result.delta_neg[i, k]))
                    for i, p in enumerate(result.plant_ids)
                    for k, t in enumerate(ts)
                ],
            )
        )
    doc = {
        "stage": result.stage,
        "representation": result.representation,
        "objective": result.objective,
        "costs": result.costs,
    }
    obj_path = path("objective.json")
    with open(obj_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    out.append(obj_path)
    return out


__all__ = [
    "DispatchProblem",
    "DispatchResult",
    "MarketConfig",
    "MarketError",
    "build_dispatch",
    "overloaded_lines_n0",
    "overloaded_lines_n1",
    "redispatch_quantity",
    "run_market",
    "run_redispatch",
    "write_results",
]
