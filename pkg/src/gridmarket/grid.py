"""DC network model: topology, PTDF/LODF sensitivities and CBCO constraint rows."""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np

from gridmarket.dataio import DataError

log = logging.getLogger(__name__)

ISLANDING_TOL = 1e-8
BALANCE_TOL = 1e-6


class GridError(ValueError):
    """Inconsistent network input (topology, outage ids, unbalanced injections)."""


def _id_key(node_id):
    # numeric ids sort numerically, others lexically after them
    try:
        return (0, float(node_id), "")
    except ValueError:
        return (1, 0.0, node_id)


@dataclass
class Topology:
    node_ids: list
    line_ids: list
    incidence: np.ndarray  # lines x nodes, +1 at from, -1 at to
    susceptance: np.ndarray
    capacity: np.ndarray
    contingency: np.ndarray
    components: list  # arrays of node indices
    slack: list  # node index per component
    node_zone: list = field(default_factory=list)

    def __post_init__(self):
        self.node_index = {n: i for i, n in enumerate(self.node_ids)}
        self.line_index = {l: i for i, l in enumerate(self.line_ids)}
        self.component_of = np.empty(len(self.node_ids), dtype=np.int64)
        for k, comp in enumerate(self.components):
            self.component_of[comp] = k

    @property
    def n_nodes(self):
        return len(self.node_ids)

    @property
    def n_lines(self):
        return len(self.line_ids)

    def line_positions(self, line_ids):
        try:
            return np.array([self.line_index[l] for l in line_ids], dtype=np.int64)
        except KeyError as exc:
            raise GridError(f"unknown line id {exc.args[0]!r}") from None

    def without(self, line_ids):
        """Topology with ``line_ids`` removed; slacks kept where the component survives."""
        drop = set(self.line_positions(line_ids).tolist())
        keep = [k for k in range(self.n_lines) if k not in drop]
        flagged = {self.node_ids[s] for s in self.slack}
        return _assemble(
            self.node_ids,
            [self.line_ids[k] for k in keep],
            [(self.incidence[k] > 0).argmax() for k in keep],
            [(self.incidence[k] < 0).argmax() for k in keep],
            self.susceptance[keep],
            self.capacity[keep],
            self.contingency[keep],
            flagged,
            self.node_zone,
            strict=False,
        )

    def fingerprint(self):
        h = hashlib.sha256()
        h.update(repr((self.node_ids, self.line_ids)).encode())
        for arr in (self.incidence, self.susceptance, self.capacity, np.asarray(self.slack)):
            h.update(np.ascontiguousarray(arr, dtype=float).tobytes())
        return h.hexdigest()


def _components(n, f, t):
    parent = np.arange(n)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in zip(f, t):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(a) for a in range(n)], dtype=np.int64)
    order = []
    seen = {}
    for a in range(n):
        if roots[a] not in seen:
            seen[roots[a]] = len(order)
            order.append([])
        order[seen[roots[a]]].append(a)
    return [np.array(c, dtype=np.int64) for c in order]


def _assemble(node_ids, line_ids, f, t, b, cap, cont, flagged, node_zone, strict=True):
    n = len(node_ids)
    f = np.asarray(f, dtype=np.int64)
    t = np.asarray(t, dtype=np.int64)
    A = np.zeros((len(line_ids), n))
    A[np.arange(len(line_ids)), f] = 1.0
    A[np.arange(len(line_ids)), t] = -1.0
    comps = _components(n, f, t)
    slack = []
    for comp in comps:
        ids = [node_ids[i] for i in comp]
        marked = [i for i in comp if node_ids[i] in flagged]
        if len(marked) > 1:
            if strict:
                raise GridError(
                    "more than one slack node in a connected component: "
                    + ", ".join(node_ids[i] for i in marked)
                )
            marked = marked[:1]
        if marked:
            slack.append(int(marked[0]))
        else:
            lowest = min(ids, key=_id_key)
            slack.append(int(comp[ids.index(lowest)]))
    return Topology(
        list(node_ids),
        list(line_ids),
        A,
        np.asarray(b, dtype=float),
        np.asarray(cap, dtype=float),
        np.asarray(cont, dtype=bool),
        comps,
        slack,
        list(node_zone),
    )


def build_topology(dataset) -> Topology:
    """Incidence, susceptances, connected components and one slack per component.

    The slack is the flagged node of a component, otherwise its lowest node id.
    """
    node_ids = dataset.node_ids()
    index = {n: i for i, n in enumerate(node_ids)}
    lines = dataset.lines
    return _assemble(
        node_ids,
        [l.id for l in lines],
        [index[l.node_from] for l in lines],
        [index[l.node_to] for l in lines],
        [1.0 / l.reactance for l in lines],
        [l.capacity for l in lines],
        [l.contingency for l in lines],
        {n.id for n in dataset.nodes if n.slack},
        [n.zone for n in dataset.nodes],
    )


@dataclass
class PtdfMatrix:
    matrix: np.ndarray
    slack: list
    topology: Topology

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)


def compute_ptdf(topology: Topology, slack=None) -> PtdfMatrix:
    """PTDF = diag(b) A B_red^-1 per component, with zero slack columns.

    ``slack`` overrides the slack node index per component.

    Examples
    --------
    Radial line 1 -> 2 with slack at node 2:

    >>> topo = _assemble(["1", "2"], ["l"], [0], [1], [1.0], [1.0], [True], {"2"}, ["A", "A"])
    >>> compute_ptdf(topo).matrix.tolist()
    [[1.0, 0.0]]
    """
    slack = list(topology.slack if slack is None else slack)
    if len(slack) != len(topology.components):
        raise GridError("need exactly one slack per component")
    A, b = topology.incidence, topology.susceptance
    H = np.zeros((topology.n_lines, topology.n_nodes))
    for comp, s in zip(topology.components, slack):
        if s not in comp:
            raise GridError(f"slack node {topology.node_ids[s]} is not in its component")
        if len(comp) == 1:
            continue
        keep = comp[comp != s]
        rows = np.flatnonzero(np.abs(A[:, comp]).sum(axis=1) > 0)
        Ak = A[np.ix_(rows, keep)]
        Bred = Ak.T @ (b[rows, None] * Ak)
        try:
            X = np.linalg.solve(Bred, np.eye(len(keep)))
        except np.linalg.LinAlgError:
            raise RuntimeError("singular reduced susceptance matrix in a connected component") from None
        H[np.ix_(rows, keep)] = b[rows, None] * (Ak @ X)
    return PtdfMatrix(H, slack, topology)


def compute_flows(ptdf: PtdfMatrix, injections) -> np.ndarray:
    """Line flows for nodal injections (one column per timestep if 2-D)."""
    inj = np.asarray(injections, dtype=float)
    topo = ptdf.topology
    if inj.shape[0] != topo.n_nodes:
        raise GridError(f"expected {topo.n_nodes} nodal injections, got {inj.shape[0]}")
    for k, comp in enumerate(topo.components):
        imbalance = np.abs(inj[comp].sum(axis=0)).max(initial=0.0)
        if imbalance > BALANCE_TOL:
            raise GridError(
                f"injections in component {k} (slack {topo.node_ids[topo.slack[k]]}) are unbalanced by {imbalance:.6g} MW"
            )
    return ptdf.matrix @ inj


@dataclass
class Lodf:
    matrix: np.ndarray | None  # monitored lines x outaged lines
    outage: np.ndarray  # outaged line positions
    islanding: bool


def compute_lodf(ptdf: PtdfMatrix, topology: Topology, outage) -> Lodf:
    """Line outage distribution factors for the simultaneous outage of ``outage`` (line ids).

    ``L = PTDF D_K (I - PTDF_K D_K)^-1`` where ``D_K`` holds the end-node
    differences of the outaged lines. The rows of outaged lines are set to
    ``-I`` so their post-outage flow is exactly zero.
    """
    K = topology.line_positions(outage)
    if len(K) == 0:
        raise GridError("empty outage set")
    D = topology.incidence[K].T  # nodes x K
    PD = ptdf.matrix @ D
    M = np.eye(len(K)) - PD[K]
    sv = np.linalg.svd(M, compute_uv=False)
    if sv.min() < ISLANDING_TOL:
        return Lodf(None, K, True)
    L = np.linalg.solve(M.T, PD.T).T
    L[K] = -np.eye(len(K))
    return Lodf(L, K, False)


@dataclass(frozen=True)
class ContingencyScenario:
    id: str
    lines: tuple
    islanding: bool = False


def enumerate_contingencies(topology: Topology, options, ptdf: PtdfMatrix | None = None) -> list:
    """Single-line and grouped outage scenarios.

    ``options`` is an :class:`~gridmarket.dataio.Options` or its ``contingency``
    block. Islanding scenarios are kept with ``islanding=True`` (callers skip
    them); scenarios whose largest |LODF| on the surviving lines stays below
    the sensitivity threshold are dropped.
    """
    copt = getattr(options, "contingency", options)
    if not copt.enabled:
        return []
    ptdf = ptdf or compute_ptdf(topology)
    grouped = set()
    groups = []
    for k, group in enumerate(copt.groups):
        pos = topology.line_positions(group)
        for p in pos:
            if not topology.contingency[p]:
                raise GridError(f"contingency group {k} contains ineligible line {topology.line_ids[p]!r}")
        grouped.update(pos.tolist())
        groups.append(tuple(group))
    candidates = [
        (topology.line_ids[k], (topology.line_ids[k],))
        for k in range(topology.n_lines)
        if topology.contingency[k] and k not in grouped
    ]
    candidates += [("+".join(g), g) for g in groups]

    out = []
    for sid, lines in candidates:
        lodf = compute_lodf(ptdf, topology, lines)
        if lodf.islanding:
            log.warning("contingency %s islands part of the network; excluded from security constraints", sid)
            out.append(ContingencyScenario(sid, lines, True))
            continue
        others = np.ones(topology.n_lines, bool)
        others[lodf.outage] = False
        impact = np.abs(lodf.matrix[others]).max(initial=0.0)
        if impact < copt.sensitivity_threshold:
            log.debug("contingency %s dropped: max |LODF| %.3g below threshold", sid, impact)
            continue
        out.append(ContingencyScenario(sid, lines))
    return out


BASECASE = "basecase"


@dataclass
class GridRepresentation:
    """Flow constraints ``A p <= b`` over nodal injections or zonal net positions.

    Row ``k`` monitors ``line[k]`` under ``scenario[k]`` in ``direction[k]``.
    """

    A: np.ndarray
    b: np.ndarray
    line: list
    scenario: list
    direction: list
    space: str = "nodal"
    reduced: bool = False
    essential: np.ndarray | None = None
    provenance: str = ""
    scenarios: list = field(default_factory=list)
    n_full: int | None = None

    def __post_init__(self):
        if self.n_full is None:
            self.n_full = len(self.b)

    def __len__(self):
        return len(self.b)

    @property
    def constraints(self):
        return [
            CbcoConstraint(self.line[k], self.scenario[k], self.direction[k], self.A[k], float(self.b[k]))
            for k in range(len(self.b))
        ]

    @property
    def ids(self):
        return [f"{l}|{s}|{d}" for l, s, d in zip(self.line, self.scenario, self.direction)]

    def subset(self, indices, reduced=True):
        idx = np.asarray(indices, dtype=np.int64)
        return GridRepresentation(
            self.A[idx],
            self.b[idx],
            [self.line[k] for k in idx],
            [self.scenario[k] for k in idx],
            [self.direction[k] for k in idx],
            self.space,
            reduced,
            idx if reduced else None,
            self.provenance,
            self.scenarios,
            self.n_full,
        )


@dataclass
class CbcoConstraint:
    line: str
    scenario: str
    direction: str
    row: np.ndarray
    rhs: float


def scenario_sensitivities(ptdf: PtdfMatrix, topology: Topology, scenario: ContingencyScenario) -> np.ndarray:
    """Post-outage PTDF ``PTDF + LODF PTDF_K`` for a non-islanding scenario."""
    lodf = compute_lodf(ptdf, topology, scenario.lines)
    if lodf.islanding:
        raise GridError(f"scenario {scenario.id} islands the network")
    return ptdf.matrix + lodf.matrix @ ptdf.matrix[lodf.outage]


def build_security_constraints(ptdf: PtdfMatrix, scenarios=(), capacities=None) -> GridRepresentation:
    """N-0 rows plus one block per non-islanding scenario, both directions per line.

    Rows for outaged lines under their own outage are kept (they are zero
    rows, so the row count stays ``2 * lines * (scenarios + 1)``).
    """
    topo = ptdf.topology
    cap = topo.capacity if capacities is None else np.asarray(capacities, dtype=float)
    usable = [s for s in scenarios if not s.islanding]
    blocks = [(BASECASE, ptdf.matrix)] + [(s.id, scenario_sensitivities(ptdf, topo, s)) for s in usable]
    L, N = topo.n_lines, topo.n_nodes
    A = np.empty((2 * L * len(blocks), N))
    b = np.empty(2 * L * len(blocks))
    lines, scen, dirs = [], [], []
    for k, (sid, H) in enumerate(blocks):
        A[2 * L * k : 2 * L * k + L] = H
        A[2 * L * k + L : 2 * L * (k + 1)] = -H
        b[2 * L * k : 2 * L * (k + 1)] = np.concatenate([cap, cap])
        lines += topo.line_ids * 2
        scen += [sid] * (2 * L)
        dirs += ["+"] * L + ["-"] * L
    h = hashlib.sha256(topo.fingerprint().encode())
    h.update(repr([(s.id, s.lines) for s in usable]).encode())
    h.update(np.ascontiguousarray(cap).tobytes())
    return GridRepresentation(A, b, lines, scen, dirs, "nodal", False, None, h.hexdigest(), usable)


def post_contingency_flows(ptdf: PtdfMatrix, lodf: Lodf, injections, scenario: ContingencyScenario | None = None):
    """``f_pre + LODF f_pre[outaged]``; outaged lines carry zero flow."""
    if lodf.islanding:
        sid = scenario.id if scenario is not None else "outage"
        raise GridError(f"scenario {sid} islands the network; post-contingency flows undefined")
    f = compute_flows(ptdf, injections)
    return f + lodf.matrix @ f[lodf.outage]


def injection_bounds(dataset) -> np.ndarray:
    return dataset.injection_bounds()


__all__ = [
    "BASECASE",
    "CbcoConstraint",
    "ContingencyScenario",
    "DataError",
    "GridError",
    "GridRepresentation",
    "Lodf",
    "PtdfMatrix",
    "Topology",
    "build_security_constraints",
    "build_topology",
    "compute_flows",
    "compute_lodf",
    "compute_ptdf",
    "enumerate_contingencies",
    "injection_bounds",
    "post_contingency_flows",
    "scenario_sensitivities",
]
