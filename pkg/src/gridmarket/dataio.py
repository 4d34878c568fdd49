"""Dataset tables, validation, run options and Matpower import.

A dataset directory (or zip archive of one) holds one CSV per table::

    nodes.csv         id,zone,slack,lat,lon
    zones.csv         id
    lines.csv         id,node_from,node_to,reactance,capacity,contingency
    plants.csv        id,node,mc_el,g_max,h_max,heat_area,eta,storage_capacity,chp_ratio,availability
    demand.csv        timestep,node,value
    heat_demand.csv   timestep,heat_area,value      (optional)
    availability.csv  timestep,id,value             (optional)
    ntc.csv           zone_from,zone_to,capacity    (optional)

Timesteps are integer indices ``0..T-1``.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import re
import zipfile
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

FIXTURES = ("two_node", "three_node_ring", "storage_heat", "case9.m", "case30.m", "case118.m")


def fixture_path(name) -> Path:
    """Path of a bundled fixture (dataset directory or Matpower ``.m`` case)."""
    if name not in FIXTURES:
        raise DataError(f"unknown fixture {name!r}; choose from {', '.join(FIXTURES)}")
    return Path(__file__).resolve().parent / "data" / name


def load_fixture(name, timesteps=1) -> "Dataset":
    """Load a bundled fixture; Matpower cases get ``timesteps`` flat demand steps."""
    path = fixture_path(name)
    if path.suffix == ".m":
        return import_matpower_case(path, timesteps)
    return load_dataset(path)


REQUIRED_TABLES = ("nodes", "zones", "lines", "plants", "demand")
OPTIONAL_TABLES = ("heat_demand", "availability", "ntc")
COLUMNS = {
    "nodes": ("id", "zone", "slack", "lat", "lon"),
    "zones": ("id",),
    "lines": ("id", "node_from", "node_to", "reactance", "capacity", "contingency"),
    "plants": (
        "id", "node", "mc_el", "g_max", "h_max", "heat_area", "eta",
        "storage_capacity", "chp_ratio", "availability",
    ),
    "demand": ("timestep", "node", "value"),
    "heat_demand": ("timestep", "heat_area", "value"),
    "availability": ("timestep", "id", "value"),
    "ntc": ("zone_from", "zone_to", "capacity"),
}


class DataError(ValueError):
    """Unreadable or inconsistent input data."""


class InvalidDatasetError(DataError):
    """Model data requested from a dataset that has validation errors."""


class OptionsError(DataError):
    """Malformed options document."""


@dataclass
class Zone:
    id: str


@dataclass
class Node:
    id: str
    zone: str
    slack: bool = False
    lat: float | None = None
    lon: float | None = None


@dataclass
class Line:
    id: str
    node_from: str
    node_to: str
    reactance: float
    capacity: float
    contingency: bool = True


@dataclass
class Plant:
    id: str
    node: str
    mc_el: float
    g_max: float
    h_max: float = 0.0
    heat_area: str | None = None
    eta: float | None = None
    storage_capacity: float = 0.0
    chp_ratio: float | None = None
    availability: str | None = None

    @property
    def is_storage(self):
        return self.storage_capacity > 0

    @property
    def is_heat_only(self):
        return self.h_max > 0 and self.chp_ratio is None and self.g_max == 0

    @property
    def is_chp(self):
        return self.h_max > 0 and self.chp_ratio is not None


@dataclass
class Ntc:
    zone_from: str
    zone_to: str
    capacity: float


@dataclass
class TimeSeries:
    id: str
    values: dict


@dataclass
class Finding:
    severity: str  # "error" | "warning"
    table: str
    row: str
    message: str

    def __str__(self):
        return f"{self.severity}: {self.table}[{self.row}]: {self.message}"


@dataclass
class ValidationReport:
    findings: list = field(default_factory=list)

    @property
    def errors(self):
        return [f for f in self.findings if f.severity == "error"]

    @property
    def warnings(self):
        return [f for f in self.findings if f.severity == "warning"]

    @property
    def valid(self):
        return not self.errors

    def error(self, table, row, message):
        self.findings.append(Finding("error", table, str(row), message))

    def warning(self, table, row, message):
        self.findings.append(Finding("warning", table, str(row), message))


@dataclass
class Dataset:
    nodes: list
    zones: list
    lines: list
    plants: list
    ntcs: list = field(default_factory=list)
    demand: dict = field(default_factory=dict)
    heat_demand: dict = field(default_factory=dict)
    availability: dict = field(default_factory=dict)
    timesteps: list = field(default_factory=list)
    validation_report: ValidationReport = field(default_factory=ValidationReport)
    source: str = ""
    import_findings: list = field(default_factory=list)

    def validate(self):
        self.validation_report = validate_dataset(self)
        return self.validation_report

    @property
    def valid(self):
        return self.validation_report.valid

    def _require_valid(self):
        if not self.valid:
            errors = "; ".join(str(f) for f in self.validation_report.errors[:5])
            raise InvalidDatasetError(f"dataset has validation errors: {errors}")

    # model-facing accessors -------------------------------------------------
    def node_ids(self):
        self._require_valid()
        return [n.id for n in self.nodes]

    def zone_ids(self):
        self._require_valid()
        return [z.id for z in self.zones]

    def line_ids(self):
        self._require_valid()
        return [ln.id for ln in self.lines]

    def heat_areas(self):
        self._require_valid()
        areas = {p.heat_area for p in self.plants if p.heat_area} | set(self.heat_demand)
        return sorted(areas)

    def demand_matrix(self, timesteps=None):
        """Nodal demand in MW, shape (nodes, timesteps)."""
        self._require_valid()
        timesteps = self.timesteps if timesteps is None else list(timesteps)
        self._check_horizon(timesteps)
        out = np.zeros((len(self.nodes), len(timesteps)))
        for i, node in enumerate(self.nodes):
            series = self.demand.get(node.id, {})
            for k, t in enumerate(timesteps):
                out[i, k] = series.get(t, 0.0)
        return out

    def heat_demand_matrix(self, timesteps=None):
        self._require_valid()
        timesteps = self.timesteps if timesteps is None else list(timesteps)
        self._check_horizon(timesteps)
        areas = self.heat_areas()
        out = np.zeros((len(areas), len(timesteps)))
        for i, area in enumerate(areas):
            series = self.heat_demand.get(area, {})
            for k, t in enumerate(timesteps):
                out[i, k] = series.get(t, 0.0)
        return out

    def availability_matrix(self, timesteps=None):
        """Available fraction of g_max per plant, shape (plants, timesteps)."""
        self._require_valid()
        timesteps = self.timesteps if timesteps is None else list(timesteps)
        self._check_horizon(timesteps)
        out = np.ones((len(self.plants), len(timesteps)))
        for i, plant in enumerate(self.plants):
            if plant.availability:
                values = self.availability[plant.availability].values
                out[i] = [values[t] for t in timesteps]
        return out

    def peak_demand(self):
        """Peak nodal demand over all timesteps of the dataset."""
        d = self.demand_matrix()
        return d.max(axis=1) if d.shape[1] else np.zeros(len(self.nodes))

    def injection_bounds(self):
        """Per-node injection limit ``peak demand + sum of g_max`` (symmetric bound)."""
        self._require_valid()
        index = {n.id: i for i, n in enumerate(self.nodes)}
        bound = np.maximum(self.peak_demand(), 0.0)
        for p in self.plants:
            bound[index[p.node]] += p.g_max
        return bound

    def ntc_capacity(self, zone_from, zone_to):
        for ntc in self.ntcs:
            if ntc.zone_from == zone_from and ntc.zone_to == zone_to:
                return ntc.capacity
        return 0.0

    def _check_horizon(self, timesteps):
        known = set(self.timesteps)
        missing = [t for t in timesteps if t not in known]
        if missing:
            raise DataError(f"timesteps {missing[:5]} are outside the dataset horizon 0..{len(self.timesteps) - 1}")


# ------------------------------------------------------------------ reading
def _parse_float(value, table, row, column, default=None, allow_inf=False):
    value = (value or "").strip()
    if value == "":
        if default is None:
            raise DataError(f"{table}.csv row {row} column {column}: value required")
        return default
    try:
        out = float(value)
    except ValueError:
        raise DataError(f"{table}.csv row {row} column {column}: cannot parse {value!r} as number") from None
    if math.isnan(out) or (math.isinf(out) and not allow_inf):
        raise DataError(f"{table}.csv row {row} column {column}: {value!r} is not a finite number")
    return out


def _parse_optional_float(value, table, row, column):
    value = (value or "").strip()
    return None if value == "" else _parse_float(value, table, row, column)


def _parse_bool(value, table, row, column, default=False):
    value = (value or "").strip().lower()
    if value == "":
        return default
    if value in ("1", "true", "yes", "y", "t"):
        return True
    if value in ("0", "false", "no", "n", "f"):
        return False
    raise DataError(f"{table}.csv row {row} column {column}: cannot parse {value!r} as boolean")


def _parse_int(value, table, row, column):
    value = (value or "").strip()
    try:
        return int(value)
    except ValueError:
        raise DataError(f"{table}.csv row {row} column {column}: cannot parse {value!r} as integer") from None


def _opt_str(value):
    value = (value or "").strip()
    return value or None


class _Source:
    """Uniform access to a dataset directory or zip archive."""

    def __init__(self, path):
        self.path = Path(path)
        if not self.path.exists():
            raise DataError(f"dataset path {self.path} does not exist")
        self.archive = None
        self.names = {}
        if self.path.is_dir():
            for p in self.path.glob("*.csv"):
                self.names[p.stem] = p
        elif zipfile.is_zipfile(self.path):
            self.archive = zipfile.ZipFile(self.path)
            for name in self.archive.namelist():
                if name.endswith(".csv") and not name.startswith("__MACOSX"):
                    self.names.setdefault(Path(name).stem, name)
        else:
            raise DataError(f"{self.path} is neither a directory nor a zip archive")

    def rows(self, table):
        if table not in self.names:
            return None
        if self.archive is not None:
            text = self.archive.read(self.names[table]).decode("utf-8-sig")
        else:
            text = self.names[table].read_text(encoding="utf-8-sig")
        reader = csv.DictReader(io.StringIO(text))
        header = [h.strip() for h in (reader.fieldnames or [])]
        reader.fieldnames = header
        required = {"plants": ("id", "node", "mc_el", "g_max")}.get(table, COLUMNS[table])
        if table == "nodes":
            required = ("id", "zone")
        missing = [c for c in required if c not in header]
        if missing:
            raise DataError(f"{table}.csv: missing column(s) {', '.join(missing)}")
        return list(reader)


def load_dataset(path) -> Dataset:
    """Read, cross-reference and validate a dataset directory or zip archive.

    Raises
    ------
    DataError
        Missing table, unparsable value or dangling reference; the message
        names the table, row (1-based data row) and column.
    """
    src = _Source(path)
    tables = {}
    for table in REQUIRED_TABLES:
        rows = src.rows(table)
        if rows is None:
            raise DataError(f"missing table {table}.csv in {path}")
        tables[table] = rows
    for table in OPTIONAL_TABLES:
        tables[table] = src.rows(table) or []

    zones = [Zone(r["id"].strip()) for r in tables["zones"]]
    zone_ids = {z.id for z in zones}
    nodes = []
    for k, r in enumerate(tables["nodes"], 1):
        zone = r["zone"].strip()
        if zone not in zone_ids:
            raise DataError(f"nodes.csv row {k} column zone: unknown zone {zone!r}")
        nodes.append(
            Node(
                r["id"].strip(),
                zone,
                _parse_bool(r.get("slack"), "nodes", k, "slack"),
                _parse_optional_float(r.get("lat"), "nodes", k, "lat"),
                _parse_optional_float(r.get("lon"), "nodes", k, "lon"),
            )
        )
    node_ids = {n.id for n in nodes}

    lines = []
    for k, r in enumerate(tables["lines"], 1):
        for col in ("node_from", "node_to"):
            if r[col].strip() not in node_ids:
                raise DataError(f"lines.csv row {k} column {col}: unknown node {r[col].strip()!r}")
        lines.append(
            Line(
                r["id"].strip(),
                r["node_from"].strip(),
                r["node_to"].strip(),
                _parse_float(r["reactance"], "lines", k, "reactance"),
                _parse_float(r["capacity"], "lines", k, "capacity", allow_inf=True),
                _parse_bool(r.get("contingency"), "lines", k, "contingency", default=True),
            )
        )

    availability = {}
    for k, r in enumerate(tables["availability"], 1):
        sid = r["id"].strip()
        t = _parse_int(r["timestep"], "availability", k, "timestep")
        availability.setdefault(sid, TimeSeries(sid, {})).values[t] = _parse_float(
            r["value"], "availability", k, "value"
        )

    plants = []
    for k, r in enumerate(tables["plants"], 1):
        node = r["node"].strip()
        if node not in node_ids:
            raise DataError(f"plants.csv row {k} column node: unknown node {node!r}")
        series = _opt_str(r.get("availability"))
        if series is not None and series not in availability:
            raise DataError(f"plants.csv row {k} column availability: unknown series {series!r}")
        plants.append(
            Plant(
                id=r["id"].strip(),
                node=node,
                mc_el=_parse_float(r["mc_el"], "plants", k, "mc_el"),
                g_max=_parse_float(r["g_max"], "plants", k, "g_max"),
                h_max=_parse_float(r.get("h_max"), "plants", k, "h_max", default=0.0),
                heat_area=_opt_str(r.get("heat_area")),
                eta=_parse_optional_float(r.get("eta"), "plants", k, "eta"),
                storage_capacity=_parse_float(r.get("storage_capacity"), "plants", k, "storage_capacity", default=0.0),
                chp_ratio=_parse_optional_float(r.get("chp_ratio"), "plants", k, "chp_ratio"),
                availability=series,
            )
        )

    demand = {}
    for k, r in enumerate(tables["demand"], 1):
        node = r["node"].strip()
        if node not in node_ids:
            raise DataError(f"demand.csv row {k} column node: unknown node {node!r}")
        t = _parse_int(r["timestep"], "demand", k, "timestep")
        demand.setdefault(node, {})[t] = _parse_float(r["value"], "demand", k, "value")

    heat_demand = {}
    for k, r in enumerate(tables["heat_demand"], 1):
        area = r["heat_area"].strip()
        t = _parse_int(r["timestep"], "heat_demand", k, "timestep")
        heat_demand.setdefault(area, {})[t] = _parse_float(r["value"], "heat_demand", k, "value")

    ntcs = []
    for k, r in enumerate(tables["ntc"], 1):
        for col in ("zone_from", "zone_to"):
            if r[col].strip() not in zone_ids:
                raise DataError(f"ntc.csv row {k} column {col}: unknown zone {r[col].strip()!r}")
        ntcs.append(Ntc(r["zone_from"].strip(), r["zone_to"].strip(), _parse_float(r["capacity"], "ntc", k, "capacity")))

    steps = set()
    for series in demand.values():
        steps |= set(series)
    ds = Dataset(
        nodes=nodes,
        zones=zones,
        lines=lines,
        plants=plants,
        ntcs=ntcs,
        demand=demand,
        heat_demand=heat_demand,
        availability=availability,
        timesteps=sorted(steps),
        source=str(path),
    )
    ds.validate()
    for finding in ds.validation_report.findings:
        (log.error if finding.severity == "error" else log.warning)("%s", finding)
    return ds


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value) if not value.is_integer() or abs(value) >= 1e16 else str(int(value))
    return str(value)


def write_dataset(dataset: Dataset, path):
    """Write ``dataset`` as a directory of CSV tables readable by :func:`load_dataset`."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)

    def dump(table, rows):
        with open(path / f"{table}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS[table])
            for row in rows:
                w.writerow([_fmt(v) for v in row])

    dump("zones", [(z.id,) for z in dataset.zones])
    dump("nodes", [(n.id, n.zone, n.slack, n.lat, n.lon) for n in dataset.nodes])
    dump("lines", [(l.id, l.node_from, l.node_to, l.reactance, l.capacity, l.contingency) for l in dataset.lines])
    dump("plants", [tuple(getattr(p, f.name) for f in fields(Plant)) for p in dataset.plants])
    dump("demand", [(t, n, v) for n, s in dataset.demand.items() for t, v in sorted(s.items())])
    dump("heat_demand", [(t, a, v) for a, s in dataset.heat_demand.items() for t, v in sorted(s.items())])
    dump("availability", [(t, sid, v) for sid, s in dataset.availability.items() for t, v in sorted(s.values.items())])
    dump("ntc", [(n.zone_from, n.zone_to, n.capacity) for n in dataset.ntcs])
    return path


# --------------------------------------------------------------- validation
def _components(node_ids, edges):
    parent = {n: n for n in node_ids}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    groups = {}
    for n in node_ids:
        groups.setdefault(find(n), []).append(n)
    return list(groups.values())


def validate_dataset(dataset: Dataset) -> ValidationReport:
    """Check table invariants; findings are returned, never raised."""
    rep = ValidationReport(list(dataset.import_findings))

    def dupes(items, table):
        seen = set()
        for item in items:
            if item.id in seen:
                rep.error(table, item.id, "duplicate id")
            seen.add(item.id)
        return seen

    zone_ids = dupes(dataset.zones, "zones")
    node_ids = dupes(dataset.nodes, "nodes")
    dupes(dataset.lines, "lines")
    dupes(dataset.plants, "plants")

    for n in dataset.nodes:
        if n.zone not in zone_ids:
            rep.error("nodes", n.id, f"zone {n.zone!r} does not exist")
    zones_used = {n.zone for n in dataset.nodes}
    for z in dataset.zones:
        if z.id not in zones_used:
            rep.warning("zones", z.id, "zone has no nodes")

    for ln in dataset.lines:
        if ln.node_from not in node_ids or ln.node_to not in node_ids:
            rep.error("lines", ln.id, "references an unknown node")
        if ln.node_from == ln.node_to:
            rep.error("lines", ln.id, "node_from equals node_to")
        if not (ln.reactance > 0) or not math.isfinite(ln.reactance):
            rep.error("lines", ln.id, f"reactance must be strictly positive, got {ln.reactance}")
        if not math.isfinite(ln.capacity) or ln.capacity < 0:
            rep.error("lines", ln.id, f"capacity must be finite and >= 0, got {ln.capacity}")
        elif ln.capacity == 0:
            rep.warning("lines", ln.id, "zero capacity")

    steps = list(dataset.timesteps)
    if steps and steps != list(range(len(steps))):
        rep.error("demand", "-", "timesteps must be contiguous integers starting at 0")
    if not steps:
        rep.error("demand", "-", "no timesteps defined")
    for node, series in dataset.demand.items():
        if node not in node_ids:
            rep.error("demand", node, "unknown node")
        missing = [t for t in steps if t not in series]
        if missing:
            rep.error("demand", node, f"missing values for timesteps {missing[:5]}")

    heat_areas = {p.heat_area for p in dataset.plants if p.heat_area}
    for area, series in dataset.heat_demand.items():
        if area not in heat_areas:
            rep.error("heat_demand", area, "heat area has no heat plants")
        missing = [t for t in steps if t not in series]
        if missing:
            rep.error("heat_demand", area, f"missing values for timesteps {missing[:5]}")

    for sid, ts in dataset.availability.items():
        missing = [t for t in steps if t not in ts.values]
        if missing:
            rep.error("availability", sid, f"missing values for timesteps {missing[:5]}")
        bad = [v for v in ts.values.values() if not 0.0 <= v <= 1.0]
        if bad:
            rep.error("availability", sid, f"availability outside [0, 1]: {bad[:3]}")

    for p in dataset.plants:
        if p.node not in node_ids:
            rep.error("plants", p.id, "references an unknown node")
        for attr in ("g_max", "h_max", "storage_capacity"):
            if getattr(p, attr) < 0:
                rep.error("plants", p.id, f"{attr} must be >= 0")
        if p.storage_capacity > 0 and (p.eta is None or not 0 < p.eta <= 1):
            rep.error("plants", p.id, "storage requires eta in (0, 1]")
        if p.h_max > 0 and not p.heat_area:
            rep.error("plants", p.id, "h_max > 0 requires heat_area")
        if p.chp_ratio is not None and p.chp_ratio <= 0:
            rep.error("plants", p.id, "chp_ratio must be > 0")
        if p.chp_ratio is not None and p.h_max <= 0:
            rep.error("plants", p.id, "chp_ratio given without heat capacity")
        if p.availability and p.availability not in dataset.availability:
            rep.error("plants", p.id, f"unknown availability series {p.availability!r}")

    seen = set()
    for ntc in dataset.ntcs:
        key = (ntc.zone_from, ntc.zone_to)
        if key in seen:
            rep.error("ntc", f"{key[0]}->{key[1]}", "duplicate directed pair")
        seen.add(key)
        if ntc.zone_from not in zone_ids or ntc.zone_to not in zone_ids:
            rep.error("ntc", f"{key[0]}->{key[1]}", "unknown zone")
        if not math.isfinite(ntc.capacity) or ntc.capacity < 0:
            rep.error("ntc", f"{key[0]}->{key[1]}", "capacity must be finite and >= 0")

    edges = [(l.node_from, l.node_to) for l in dataset.lines if l.node_from in node_ids and l.node_to in node_ids]
    slack = {n.id for n in dataset.nodes if n.slack}
    for comp in _components([n.id for n in dataset.nodes], edges):
        flagged = sorted(slack.intersection(comp))
        if len(flagged) > 1:
            rep.error("nodes", ",".join(flagged), "more than one slack node in a connected component")
        load = sum(max(dataset.demand.get(n, {}).values(), default=0.0) for n in comp)
        if load <= 0 and len(comp) < len(dataset.nodes):
            rep.warning("nodes", ",".join(sorted(comp)[:5]), "island without load")
    return rep


# ------------------------------------------------------------------ options
@dataclass
class RedispatchOptions:
    include: bool = False
    cost: float = 50.0


@dataclass
class ContingencyOptions:
    enabled: bool = False
    sensitivity_threshold: float = 0.05
    groups: list = field(default_factory=list)


@dataclass
class Options:
    type: str = "nodal"
    model_horizon: tuple = (0, 1)
    redispatch: RedispatchOptions = field(default_factory=RedispatchOptions)
    contingency: ContingencyOptions = field(default_factory=ContingencyOptions)
    gsk_strategy: str = "flat"
    min_ram: float = 0.0
    curtailment_cost: float = 1000.0
    infeasibility_penalty: float = 10000.0
    redundancy_removal: bool = True
    warnings: list = field(default_factory=list, compare=False)

    @property
    def timesteps(self):
        return list(range(self.model_horizon[0], self.model_horizon[1]))

    def to_dict(self):
        return {
            "type": self.type,
            "model_horizon": list(self.model_horizon),
            "redispatch": {"include": self.redispatch.include, "cost": self.redispatch.cost},
            "contingency": {
                "enabled": self.contingency.enabled,
                "sensitivity_threshold": self.contingency.sensitivity_threshold,
                "groups": [list(g) for g in self.contingency.groups],
            },
            "gsk_strategy": self.gsk_strategy,
            "min_ram": self.min_ram,
            "curtailment_cost": self.curtailment_cost,
            "infeasibility_penalty": self.infeasibility_penalty,
            "redundancy_removal": self.redundancy_removal,
        }

    def with_type(self, kind):
        return replace(self, type=kind)


MARKET_TYPES = ("copper_plate", "nodal", "zonal_ntc", "zonal_fbmc")
TYPE_ALIASES = {"dispatch": "copper_plate", "ntc": "zonal_ntc", "fbmc": "zonal_fbmc", "cbco_nodal": "nodal"}
GSK_STRATEGIES = ("flat", "gmax", "basecase")


def _number(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise OptionsError(f"{path}: expected number, got {type(value).__name__}")
    return float(value)


def _boolean(value, path):
    if not isinstance(value, bool):
        raise OptionsError(f"{path}: expected boolean, got {type(value).__name__}")
    return value


def _object(value, path):
    if not isinstance(value, dict):
        raise OptionsError(f"{path}: expected object, got {type(value).__name__}")
    return value


def options_from_dict(doc) -> Options:
    """Build :class:`Options` from a parsed JSON document.

    Keys may sit at the top level or inside an ``"optimization"`` block.
    Unknown keys are collected in ``Options.warnings``; missing keys take the
    defaults of the dataclass.
    """
    doc = dict(_object(doc, "$"))
    opts = Options()
    prefix = "$"
    if "optimization" in doc:
        inner = _object(doc.pop("optimization"), "$.optimization")
        overlap = set(inner) & set(doc)
        if overlap:
            raise OptionsError(f"$.optimization: keys {sorted(overlap)} also given at top level")
        doc.update(inner)
        prefix = "$.optimization"
    known = {f.name for f in fields(Options)} - {"warnings"}
    for key, value in doc.items():
        path = f"{prefix}.{key}"
        if key not in known:
            opts.warnings.append(f"{path}: unknown option ignored")
            continue
        if key == "type":
            if not isinstance(value, str):
                raise OptionsError(f"{path}: expected string, got {type(value).__name__}")
            kind = TYPE_ALIASES.get(value, value)
            if kind not in MARKET_TYPES:
                raise OptionsError(f"{path}: unknown market type {value!r}")
            opts.type = kind
        elif key == "model_horizon":
            if not isinstance(value, list) or len(value) != 2 or not all(
                isinstance(v, int) and not isinstance(v, bool) for v in value
            ):
                raise OptionsError(f"{path}: expected [t_start, t_end] integers")
            if value[0] < 0 or value[0] >= value[1]:
                raise OptionsError(f"{path}: empty or negative horizon {value}")
            opts.model_horizon = (value[0], value[1])
        elif key == "redispatch":
            sub = _object(value, path)
            for k2, v2 in sub.items():
                if k2 == "include":
                    opts.redispatch.include = _boolean(v2, f"{path}.include")
                elif k2 == "cost":
                    opts.redispatch.cost = _number(v2, f"{path}.cost")
                else:
                    opts.warnings.append(f"{path}.{k2}: unknown option ignored")
        elif key == "contingency":
            sub = _object(value, path)
            for k2, v2 in sub.items():
                if k2 == "enabled":
                    opts.contingency.enabled = _boolean(v2, f"{path}.enabled")
                elif k2 == "sensitivity_threshold":
                    opts.contingency.sensitivity_threshold = _number(v2, f"{path}.sensitivity_threshold")
                elif k2 == "groups":
                    if not isinstance(v2, list) or not all(
                        isinstance(g, list) and g and all(isinstance(x, str) for x in g) for g in v2
                    ):
                        raise OptionsError(f"{path}.groups: expected list of non-empty lists of line ids")
                    opts.contingency.groups = [list(g) for g in v2]
                else:
                    opts.warnings.append(f"{path}.{k2}: unknown option ignored")
        elif key == "gsk_strategy":
            if value not in GSK_STRATEGIES:
                raise OptionsError(f"{path}: expected one of {GSK_STRATEGIES}")
            opts.gsk_strategy = value
        elif key == "redundancy_removal":
            opts.redundancy_removal = _boolean(value, path)
        else:
            setattr(opts, key, _number(value, path))
    for name in ("curtailment_cost", "infeasibility_penalty"):
        if getattr(opts, name) < 0:
            raise OptionsError(f"{prefix}.{name}: must be >= 0")
    if opts.redispatch.cost < 0:
        raise OptionsError(f"{prefix}.redispatch.cost: must be >= 0")
    if not 0.0 <= opts.min_ram <= 1.0:
        raise OptionsError(f"{prefix}.min_ram: must lie in [0, 1]")
    if opts.contingency.sensitivity_threshold < 0:
        raise OptionsError(f"{prefix}.contingency.sensitivity_threshold: must be >= 0")
    for w in opts.warnings:
        log.warning("%s", w)
    return opts


def load_options(path) -> Options:
    path = Path(path)
    if not path.is_file():
        raise OptionsError(f"options file {path} not found")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise OptionsError(f"{path}: invalid JSON ({exc})") from None
    return options_from_dict(doc)


# ----------------------------------------------------------------- matpower
_BLOCK = re.compile(r"mpc\.(\w+)\s*=\s*\[(.*?)\]\s*;", re.S)
_SCALAR = re.compile(r"mpc\.(\w+)\s*=\s*([-+0-9.eE]+)\s*;")


def _parse_matrix(body):
    rows = []
    for chunk in re.split(r"[;\n]", body):
        chunk = chunk.split("%", 1)[0].strip()
        if chunk:
            rows.append([float(v) for v in chunk.replace(",", " ").split()])
    return rows


def import_matpower_case(path, timesteps=1) -> Dataset:
    """Convert a Matpower case file into a dataset with a flat demand profile.

    Buses become nodes (one zone per ``area`` value), in-service branches
    become lines with ``rateA`` as capacity, in-service generators become
    plants with the linear cost coefficient as marginal cost. Each pair of
    zones joined by branches gets an NTC in both directions equal to the
    summed capacity of those tie lines.

    Raises
    ------
    DataError
        Missing sections, piecewise-linear or nonlinear cost curves.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    text = "\n".join(line.split("%", 1)[0] for line in text.splitlines())
    blocks = {name: _parse_matrix(body) for name, body in _BLOCK.findall(text)}
    for section in ("bus", "branch", "gen"):
        if section not in blocks:
            raise DataError(f"{path.name}: missing mpc.{section} section")
    gencost = blocks.get("gencost")
    if gencost is None:
        raise DataError(f"{path.name}: missing mpc.gencost section")
    if len(gencost) < len(blocks["gen"]):
        raise DataError(f"{path.name}: gencost has fewer rows than gen")

    bus, branch, gen = blocks["bus"], blocks["branch"], blocks["gen"]
    areas = sorted({int(b[6]) for b in bus})
    zones = [Zone(str(a)) for a in areas]
    nodes = [Node(_num_id(b[0]), str(int(b[6])), slack=int(b[1]) == 3) for b in bus]
    demand = {_num_id(b[0]): {t: float(b[2]) for t in range(timesteps)} for b in bus}

    plants = []
    for k, (g, cost) in enumerate(zip(gen, gencost), 1):
        if len(g) > 7 and g[7] <= 0:
            continue
        model = int(cost[0])
        if model != 2:
            raise DataError(f"{path.name}: gencost row {k} uses piecewise-linear costs (model {model}); only linear costs are supported")
        n = int(cost[3])
        coeffs = cost[4 : 4 + n]
        higher = coeffs[:-2] if n >= 2 else []
        if any(abs(c) > 0 for c in higher):
            raise DataError(f"{path.name}: gencost row {k} is nonlinear (order {n - 1}); only linear costs are supported")
        mc = coeffs[-2] if n >= 2 else 0.0
        plants.append(Plant(f"g{k}", _num_id(g[0]), float(mc), float(g[8])))

    findings = []
    in_service = [br for br in branch if len(br) <= 10 or br[10] > 0]
    peak = sum(max(b[2], 0.0) for b in bus) + sum(p.g_max for p in plants)
    lines = []
    for k, br in enumerate(in_service, 1):
        cap = float(br[5])
        lid = f"l{k}"
        if cap <= 0:
            # rateA = 0 means unlimited in Matpower; keep a finite surrogate
            cap = float(peak)
            findings.append(Finding("warning", "lines", lid, f"rateA = 0 imported as surrogate capacity {cap:g} MW"))
        lines.append(Line(lid, _num_id(br[0]), _num_id(br[1]), float(br[3]), cap, True))

    zone_of = {n.id: n.zone for n in nodes}
    ties = {}
    for ln in lines:
        a, b = zone_of[ln.node_from], zone_of[ln.node_to]
        if a != b:
            key = tuple(sorted((a, b), key=_num_key))
            ties[key] = ties.get(key, 0.0) + ln.capacity
    ntcs = []
    for (a, b), cap in ties.items():
        ntcs += [Ntc(a, b, cap), Ntc(b, a, cap)]

    ds = Dataset(
        nodes=nodes,
        zones=zones,
        lines=lines,
        plants=plants,
        ntcs=ntcs,
        demand=demand,
        timesteps=list(range(timesteps)),
        source=str(path),
        import_findings=findings,
    )
    ds.validate()
    return ds


def _num_key(value):
    return (0, float(value), "") if value.lstrip("-").replace(".", "", 1).isdigit() else (1, 0.0, value)


def _num_id(value):
    return str(int(value)) if float(value).is_integer() else str(value)
