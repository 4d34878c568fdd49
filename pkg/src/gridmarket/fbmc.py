"""Flow-based parameters from a nodal base case, and 2D slices of the domain.

A flow-based constraint maps zonal net positions to a line flow::

    z . NP <= ram,   z = row . GSK,   ram = cap - f_ref + z . NP_base

where ``row`` is a nodal (possibly post-contingency) PTDF row, ``f_ref`` the
base-case flow on it and ``NP_base`` the base-case net positions.
"""
from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from gridmarket import kernels
from gridmarket.redundancy import Polytope, RedundancyError, reduce

log = logging.getLogger(__name__)

STRATEGIES = ("flat", "gmax", "basecase")
VERTEX_TOL = 1e-6


class FbmcError(ValueError):
    pass


@dataclass
class Gsk:
    """Generation shift keys, nodes x zones; every column sums to one."""

    matrix: np.ndarray
    node_ids: list
    zone_ids: list
    strategy: str
    fallback: list = field(default_factory=list)

    def column(self, zone):
        return self.matrix[:, self.zone_ids.index(zone)]


def _gsk_weights(dataset, basecase, strategy, t):
    nodes = dataset.node_ids()
    pos = {n: i for i, n in enumerate(nodes)}
    w = np.zeros(len(nodes))
    if strategy == "flat":
        return np.ones(len(nodes))
    if strategy == "gmax":
        for p in dataset.plants:
            if p.g_max > 0 and not p.is_storage and not p.availability:
                w[pos[p.node]] += p.g_max
        return w
    if basecase is None:
        raise FbmcError("the basecase GSK strategy needs a base-case result")
    if t not in basecase.timesteps:
        raise FbmcError(f"timestep {t} is not in the base case")
    k = basecase.timesteps.index(t)
    plant_nodes = {p.id: p.node for p in dataset.plants}
    for i, pid in enumerate(basecase.plant_ids):
        w[pos[plant_nodes[pid]]] += max(basecase.G[i, k], 0.0)
    return w


def compute_gsk(dataset, basecase=None, strategy="flat", timestep=None) -> Gsk:
    """Shift keys per zone.

    ``flat`` weighs the nodes of a zone equally, ``gmax`` by installed
    dispatchable capacity (plants without an availability series, storage
    excluded) and ``basecase`` by base-case generation at ``timestep``. Zones
    whose weights are all zero fall back to flat with a warning.

    Examples
    --------
    >>> from gridmarket.dataio import Dataset, Node, Zone, Plant
    >>> ds = Dataset([Node("a", "Z", True), Node("b", "Z")], [Zone("Z")], [],
    ...              [Plant("p", "a", 1.0, 100.0), Plant("q", "b", 1.0, 300.0)],
    ...              demand={"a": {0: 10.0}}, timesteps=[0])
    >>> _ = ds.validate()
    >>> compute_gsk(ds, strategy="gmax").matrix[:, 0].tolist()
    [0.25, 0.75]
    """
    if strategy not in STRATEGIES:
        raise FbmcError(f"unknown GSK strategy {strategy!r}")
    nodes = dataset.node_ids()
    zones = dataset.zone_ids()
    if strategy == "basecase" and timestep is None:
        if basecase is None:
            raise FbmcError("the basecase GSK strategy needs a base-case result")
        timestep = basecase.timesteps[0]
    w = _gsk_weights(dataset, basecase, strategy, timestep)
    node_zone = [n.zone for n in dataset.nodes]
    M = np.zeros((len(nodes), len(zones)))
    fallback = []
    for z, zone in enumerate(zones):
        member = np.array([nz == zone for nz in node_zone])
        if not member.any():
            raise FbmcError(f"zone {zone} has no nodes")
        col = np.where(member, w, 0.0)
        total = col.sum()
        if total <= 0:
            log.warning("GSK for zone %s has no positive weight; using flat keys", zone)
            fallback.append(zone)
            col = member.astype(float)
            total = col.sum()
        M[:, z] = col / total
    return Gsk(M, nodes, zones, strategy, fallback)


@dataclass
class FbParameters:
    """Flow-based constraints per timestep.

    ``Z[k]`` (constraints x zones) and ``ram[k]`` belong to ``timesteps[k]``.
    ``f_ref`` and ``np_base`` are the base-case quantities they were built
    from; ``floored[k]`` counts rows raised to ``min_ram * capacity``.
    """

    zones: list
    timesteps: list
    ids: list
    line: list
    scenario: list
    direction: list
    capacity: np.ndarray
    Z: np.ndarray
    ram: np.ndarray
    f_ref: np.ndarray
    np_base: np.ndarray
    floored: np.ndarray
    min_ram: float = 0.0
    box: float | None = None
    gsk_strategy: str = "flat"

    def rows(self, t):
        if t not in self.timesteps:
            raise FbmcError(f"no flow-based parameters for timestep {t}")
        k = self.timesteps.index(t)
        return self.Z[k], self.ram[k]


def _base_injections(basecase, timesteps, n_nodes):
    if basecase is None:
        return np.zeros((n_nodes, len(timesteps)))
    if basecase.flows is None:
        raise FbmcError("the base case must be a nodal result with balanced injections")
    missing = [t for t in timesteps if t not in basecase.timesteps]
    if missing:
        raise FbmcError(f"base case does not cover timesteps {missing[:5]}")
    cols = [basecase.timesteps.index(t) for t in timesteps]
    return basecase.injections[:, cols]


def compute_fb_parameters(ptdf, security_constraints, gsk, basecase, options, dataset=None, gsk_per_timestep=None):
    """Zonal PTDF rows and RAMs for every constraint of ``security_constraints``.

    ``gsk`` is a :class:`Gsk`, or ``None`` together with
    ``gsk_per_timestep`` (a mapping ``t -> Gsk``) for time-varying keys.
    With ``basecase=None`` the reference is an unloaded network. ``dataset``
    is only used to size the plotting box of :func:`project_domain`.
    """
    grid = security_constraints
    if grid.space != "nodal":
        raise FbmcError("flow-based parameters are derived from nodal constraints")
    ts = list(basecase.timesteps) if basecase is not None else list(options.timesteps)
    if basecase is not None and options is not None:
        wanted = list(options.timesteps)
        if any(t not in basecase.timesteps for t in wanted):
            raise FbmcError("base-case horizon does not cover the model horizon")
        ts = wanted
    topo = ptdf.topology
    inj = _base_injections(basecase, ts, topo.n_nodes)
    keys = gsk_per_timestep or {}
    if gsk is None and not keys:
        raise FbmcError("need a GSK")
    zones = list((gsk or next(iter(keys.values()))).zone_ids)
    cap = np.asarray(grid.b, float)
    min_ram = float(options.min_ram) if options is not None else 0.0
    node_zone = topo.node_zone
    K, Zn, T = len(cap), len(zones), len(ts)
    Z = np.zeros((T, K, Zn))
    ram = np.zeros((T, K))
    f_ref = np.zeros((T, K))
    np_base = np.zeros((T, Zn))
    floored = np.zeros(T, dtype=np.int64)
    for k, t in enumerate(ts):
        g = keys.get(t, gsk)
        if g is None:
            raise FbmcError(f"no GSK for timestep {t}")
        Z[k] = grid.A @ g.matrix
        f_ref[k] = grid.A @ inj[:, k]
        np_base[k] = [inj[[i for i, z in enumerate(node_zone) if z == zone], k].sum() for zone in zones]
        raw = cap - f_ref[k] + Z[k] @ np_base[k]
        floor = min_ram * cap
        low = raw < floor
        floored[k] = int(low.sum())
        ram[k] = np.where(low, floor, raw)
    if floored.sum():
        log.info("%d flow-based rows raised to the minimum RAM", int(floored.sum()))
    box = None
    if dataset is not None:
        box = float(np.maximum(dataset.peak_demand(), 0.0).sum())
    return FbParameters(
        zones,
        ts,
        list(grid.ids),
        list(grid.line),
        list(grid.scenario),
        list(grid.direction),
        cap,
        Z,
        ram,
        f_ref,
        np_base,
        floored,
        min_ram,
        box,
        (gsk or next(iter(keys.values()))).strategy,
    )


# ------------------------------------------------------------------ domains
@dataclass
class DomainPolygon:
    axes: tuple
    vertices: np.ndarray
    constraints: list
    timestep: int | None = None
    diagnostic: str = ""

    @property
    def empty(self):
        return len(self.vertices) == 0


def _ccw(points):
    c = points.mean(axis=0)
    ang = np.arctan2(points[:, 1] - c[1], points[:, 0] - c[0])
    order = np.lexsort((points[:, 1], points[:, 0], np.round(ang, 12)))
    return points[order]


def _unique_points(points, tol):
    out = []
    for p in points:
        if not any(np.abs(p - q).max() <= tol for q in out):
            out.append(p)
    return np.array(out).reshape(-1, 2)


def _infeasible_pair(A, r, ids, box):
    lo = -box * np.ones(2)
    hi = box * np.ones(2)
    # single rows violated everywhere in the box
    minval = np.where(A > 0, A * lo, A * hi).sum(axis=1)
    single = np.flatnonzero(minval > r + VERTEX_TOL * (1 + np.abs(r)))
    if len(single):
        return f"constraint {ids[single[0]]} cannot be met inside the plotting box"
    norms = np.linalg.norm(A, axis=1)
    nz = np.flatnonzero(norms > 0)
    U = A[nz] / norms[nz, None]
    rn = r[nz] / norms[nz]
    for a in range(len(nz)):
        opposite = np.flatnonzero(U[a] @ U.T < -1 + 1e-9)
        bad = opposite[rn[a] + rn[opposite] < -VERTEX_TOL]
        if len(bad):
            return f"constraints {ids[nz[a]]} and {ids[nz[bad[0]]]} are contradictory"
    return "constraints are jointly infeasible"


def halfspace_polygon(A, r, box, ids=None, axes=("x", "y"), timestep=None) -> DomainPolygon:
    """Polygon ``{p : A p <= r, |p_i| <= box}`` with redundant rows removed first."""
    A = np.asarray(A, float).reshape(-1, 2)
    r = np.asarray(r, float).reshape(len(A))
    ids = list(ids) if ids is not None else [str(i) for i in range(len(r))]
    box = float(box)
    zero = np.all(A == 0, axis=1)
    if np.any(zero & (r < -VERTEX_TOL)):
        k = int(np.flatnonzero(zero & (r < -VERTEX_TOL))[0])
        return DomainPolygon(axes, np.zeros((0, 2)), [], timestep, f"constraint {ids[k]} is violated for every net position")
    keep = np.flatnonzero(~zero)
    Ak, rk = A[keep], r[keep]
    if len(keep):
        try:
            ess = reduce(Polytope(Ak, rk, lower=-box, upper=box)).indices
        except RedundancyError as exc:
            msg = _infeasible_pair(Ak, rk, [ids[k] for k in keep], box)
            log.warning("empty flow-based domain: %s (%s)", msg, exc)
            return DomainPolygon(axes, np.zeros((0, 2)), [], timestep, msg)
    else:
        ess = np.zeros(0, dtype=np.int64)
    E = np.vstack([Ak[ess], np.eye(2), -np.eye(2)])
    e = np.concatenate([rk[ess], np.full(4, box)])
    pts, pairs = kernels.polygon_vertices(np.ascontiguousarray(E), np.ascontiguousarray(e), VERTEX_TOL)
    ok = np.all(pts @ A.T <= r + VERTEX_TOL * (1 + np.abs(r)), axis=1) if len(pts) else np.zeros(0, bool)
    pts = pts[ok]
    pairs = pairs[ok]
    if len(pts) == 0:
        msg = _infeasible_pair(Ak, rk, [ids[k] for k in keep], box)
        return DomainPolygon(axes, np.zeros((0, 2)), [], timestep, msg)
    pts = _ccw(_unique_points(pts, 1e-9 * (1 + box)))
    touching = sorted({int(k) for k in pairs.ravel() if k < len(ess)})
    defining = [ids[keep[ess[k]]] for k in touching]
    return DomainPolygon(axes, pts, defining, timestep)


def project_domain(fb: FbParameters, timestep, zone_x, zone_y, fixed_np=None, box=None) -> DomainPolygon:
    """2D slice of the flow-based domain over the net positions of two zones.

    Other zones are fixed at ``fixed_np`` (default: base-case net positions).
    The slice does not impose the zero sum of net positions. The plotting
    box is ``+-box`` (default: summed peak demand when known, else the sum of
    |ram|).
    """
    if zone_x == zone_y:
        raise FbmcError("domain axes must be two different zones")
    for z in (zone_x, zone_y):
        if z not in fb.zones:
            raise FbmcError(f"unknown zone {z}")
    Z, ram = fb.rows(timestep)
    k = fb.timesteps.index(timestep)
    others = [z for z in fb.zones if z not in (zone_x, zone_y)]
    if fixed_np is None:
        fixed_np = {z: float(fb.np_base[k, fb.zones.index(z)]) for z in others}
    missing = [z for z in others if z not in fixed_np]
    if missing:
        raise FbmcError(f"fixed net positions missing for zones {missing}")
    r = ram.copy()
    for z in others:
        r -= Z[:, fb.zones.index(z)] * float(fixed_np[z])
    A = Z[:, [fb.zones.index(zone_x), fb.zones.index(zone_y)]]
    if box is None:
        box = fb.box if fb.box else float(np.abs(ram).sum()) or 1.0
    return halfspace_polygon(A, r, box, fb.ids, (zone_x, zone_y), timestep)


# ------------------------------------------------------------------- output
def _fmt(v):
    v = float(v)
    return "0" if abs(v) < 1e-12 else format(v, ".10g")


def write_fb_parameters(fb: FbParameters, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestep", "cbco_id", *fb.zones, "ram"])
        for k, t in enumerate(fb.timesteps):
            for i, cid in enumerate(fb.ids):
                w.writerow([t, cid, *(_fmt(v) for v in fb.Z[k, i]), _fmt(fb.ram[k, i])])
    return path


def write_domain(poly: DomainPolygon, out_dir):
    """``domain_<zx>_<zy>_<t>.csv`` with ordered vertices plus an SVG rendering."""
    os.makedirs(out_dir, exist_ok=True)
    zx, zy = poly.axes
    stem = os.path.join(out_dir, f"domain_{zx}_{zy}_{poly.timestep}")
    with open(stem + ".csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"np_{zx}", f"np_{zy}"])
        for x, y in poly.vertices:
            w.writerow([_fmt(x), _fmt(y)])
    with open(stem + ".svg", "w", encoding="utf-8") as fh:
        fh.write(domain_svg(poly))
    return [stem + ".csv", stem + ".svg"]


def domain_svg(poly: DomainPolygon, size=400, margin=40):
    zx, zy = poly.axes
    head = f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">\n'
    if poly.empty:
        return head + f'<text x="{margin}" y="{size // 2}" font-size="12">empty domain: {poly.diagnostic}</text>\n</svg>\n'
    ext = max(float(np.abs(poly.vertices).max()), 1e-9)
    scale = (size / 2 - margin) / ext
    c = size / 2

    def px(p):
        return f"{c + p[0] * scale:.3f},{c - p[1] * scale:.3f}"

    pts = " ".join(px(p) for p in poly.vertices)
    return (
        head
        + f'<line x1="{margin / 2}" y1="{c}" x2="{size - margin / 2}" y2="{c}" stroke="#999"/>\n'
        + f'<line x1="{c}" y1="{margin / 2}" x2="{c}" y2="{size - margin / 2}" stroke="#999"/>\n'
        + f'<polygon points="{pts}" fill="#9ecae1" fill-opacity="0.6" stroke="#08519c"/>\n'
        + f'<text x="{size - margin}" y="{c - 6}" font-size="12">{zx}</text>\n'
        + f'<text x="{c + 6}" y="{margin / 2 + 10}" font-size="12">{zy}</text>\n'
        + "</svg>\n"
    )


__all__ = [
    "DomainPolygon",
    "FbParameters",
    "FbmcError",
    "Gsk",
    "compute_fb_parameters",
    "compute_gsk",
    "domain_svg",
    "halfspace_polygon",
    "project_domain",
    "write_domain",
    "write_fb_parameters",
]
