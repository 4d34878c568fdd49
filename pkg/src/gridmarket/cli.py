"""Command-line pipeline: load, grid, market, redispatch, report.

``gridmarket run --data <dataset> --options <options.json> --out <dir>``
runs every stage the options ask for and writes CSV/JSON outputs, a plain
text report and ``manifest.json`` into ``<dir>``.

Exit codes: 0 success, 1 data error, 2 solve error, 3 internal error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from gridmarket.dataio import DataError, Options, import_matpower_case, load_dataset, load_options
from gridmarket.fbmc import FbmcError, compute_fb_parameters, compute_gsk, project_domain, write_domain, write_fb_parameters
from gridmarket.grid import GridError, build_security_constraints, build_topology, compute_ptdf, enumerate_contingencies
from gridmarket.market import (
    MarketConfig,
    MarketError,
    overloaded_lines_n0,
    overloaded_lines_n1,
    redispatch_quantity,
    run_market,
    run_redispatch,
    write_results,
)
from gridmarket.redundancy import TOL, Polytope, RedundancyError, load_reduction, reduce, save_reduction
from gridmarket.solver import SolveError

log = logging.getLogger("gridmarket")

EXIT_OK, EXIT_DATA, EXIT_SOLVE, EXIT_INTERNAL = 0, 1, 2, 3
N0_LABEL = "Number of N-0 Overloads"
N1_LABEL = "Number of N-1 Overloads"
RD_LABEL = "Total Redispatch in MWh"
_CACHE_VERSION = "1"


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


# --------------------------------------------------------------- logging
class _StageFilter(logging.Filter):
    stage = "main"

    def filter(self, record):
        record.stage = self.stage
        return True


_STAGE = _StageFilter()


def _setup_logging(level=logging.INFO):
    root = logging.getLogger("gridmarket")
    if any(getattr(h, "_gridmarket", False) for h in root.handlers):
        return
    handler = logging.StreamHandler(sys.stderr)
    handler._gridmarket = True
    handler.addFilter(_STAGE)
    handler.setFormatter(logging.Formatter("[%(stage)s] %(levelname)s %(message)s"))
    root.addHandler(handler)
    root.setLevel(level)


# --------------------------------------------------------------- manifest
@dataclass
class RunManifest:
    options_hash: str
    dataset_path: str
    out_dir: str
    stages: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    files: list = field(default_factory=list)
    status: str = "running"
    error: str | None = None
    failed_stage: str | None = None
    exit_code: int = EXIT_OK
    report: dict = field(default_factory=dict)
    cache: dict = field(default_factory=dict)

    def write(self):
        path = Path(self.out_dir) / "manifest.json"
        files = sorted(
            str(p.relative_to(self.out_dir)).replace(os.sep, "/") for p in Path(self.out_dir).rglob("*") if p.is_file()
        )
        self.files = sorted(set(files) | {"manifest.json"})
        doc = asdict(self)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")
        return path


def options_hash(options: Options) -> str:
    return hashlib.sha256(json.dumps(options.to_dict(), sort_keys=True).encode()).hexdigest()


# ------------------------------------------------------------- reduction
def reduction_key(grid_rep, bounds, balance, tol=TOL) -> str:
    """Cache identity: the constraint rows, injection bounds, balance flag and tolerance."""
    h = hashlib.sha256(_CACHE_VERSION.encode())
    h.update(np.ascontiguousarray(grid_rep.A, dtype=float).tobytes())
    h.update(np.ascontiguousarray(grid_rep.b, dtype=float).tobytes())
    h.update(np.ascontiguousarray(bounds, dtype=float).tobytes())
    h.update(f"{bool(balance)}|{tol!r}|{len(grid_rep)}".encode())
    return h.hexdigest()


def reduce_grid(grid_rep, dataset, cache_dir=None, tol=TOL):
    """Essential rows of a nodal grid representation, re-using a cached reduction when present.

    Returns ``(reduced, info)``; ``info`` reports the cache use and the
    reduction statistics.
    """
    if len(grid_rep) == 0:
        return grid_rep, {"cache": "off", "rows": 0, "essential": 0}
    topo_components = len(build_topology(dataset).components)
    bounds = dataset.injection_bounds()
    balance = topo_components == 1
    key = reduction_key(grid_rep, bounds, balance, tol)
    info = {"key": key, "rows": len(grid_rep)}
    path = None
    if cache_dir is not None:
        os.makedirs(cache_dir, exist_ok=True)
        path = Path(cache_dir) / f"reduction_{key[:20]}.csv"
        if path.exists():
            A, b, ess = load_reduction(path)
            if len(ess) == len(b) and np.allclose(A, grid_rep.A[ess]) and np.allclose(b, grid_rep.b[ess]):
                log.info("re-using cached reduction %s (%d of %d rows)", path.name, len(ess), len(grid_rep))
                info.update(cache="hit", path=str(path), essential=len(ess))
                return grid_rep.subset(ess), info
            log.warning("cached reduction %s does not match the grid; recomputing", path.name)
    poly = Polytope(grid_rep.A, grid_rep.b, -bounds, bounds, balance)
    essential = reduce(poly, tol=tol)
    stats = essential.stats
    log.info(
        "kept %d of %d network rows (%.2f%% removed) in %.1f s",
        len(essential),
        len(grid_rep),
        100 * stats.get("removal_fraction", 0.0),
        stats.get("seconds", 0.0),
    )
    info.update(cache="miss" if path else "off", essential=len(essential), stats=stats)
    if path is not None:
        save_reduction(path, poly, essential, essential_only=True)
        info["path"] = str(path)
    return grid_rep.subset(essential.indices), info


# ------------------------------------------------------------------ stages
def load_any(path, options: Options):
    """Dataset directory/archive, or a Matpower case expanded over the model horizon."""
    path = Path(path)
    if path.suffix == ".m":
        return import_matpower_case(path, max(options.model_horizon[1], 1))
    return load_dataset(path)


def write_report(results, out_dir):
    """Plain-text and JSON report of overload counts and redispatch volume.

    ``results`` is a mapping with ``market_n0``, ``market_n1`` and, when a
    redispatch ran, ``redispatch_n0``, ``redispatch_n1`` and
    ``redispatch_mwh``. Counts may be ``None`` when a result carries no
    nodal flows.
    """
    doc = {
        "market": {N0_LABEL: results.get("market_n0"), N1_LABEL: results.get("market_n1")},
    }
    lines = [
        f"{N0_LABEL} (market): {_show(results.get('market_n0'))}",
        f"{N1_LABEL} (market): {_show(results.get('market_n1'))}",
    ]
    if "redispatch_n0" in results:
        doc["redispatch"] = {N0_LABEL: results["redispatch_n0"], N1_LABEL: results["redispatch_n1"]}
        doc[RD_LABEL] = results["redispatch_mwh"]
        lines += [
            f"{N0_LABEL} (redispatch): {_show(results['redispatch_n0'])}",
            f"{N1_LABEL} (redispatch): {_show(results['redispatch_n1'])}",
            f"{RD_LABEL}: {results['redispatch_mwh']:.6g}",
        ]
    if "objective" in results:
        doc["objective"] = results["objective"]
    os.makedirs(out_dir, exist_ok=True)
    txt = os.path.join(out_dir, "report.txt")
    with open(txt, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    js = os.path.join(out_dir, "report.json")
    with open(js, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return txt, js, doc


def _show(v):
    return "n/a" if v is None else str(v)


def emit_geo_data(result, dataset, out_dir, market_result=None):
    """Node prices and net redispatch, mean line loading; CSV plus a GeoJSON feature file.

    Skipped with a warning when any node lacks coordinates.
    """
    nodes = dataset.nodes
    if any(n.lat is None or n.lon is None for n in nodes):
        log.warning("nodes without coordinates; no geo data written")
        return []
    os.makedirs(out_dir, exist_ok=True)
    pos = {n.id: i for i, n in enumerate(nodes)}
    net = np.zeros(len(nodes))
    if market_result is not None:
        delta = (result.net_output - market_result.net_output).sum(axis=1)
        plant_node = {p.id: p.node for p in dataset.plants}
        for i, pid in enumerate(result.plant_ids):
            net[pos[plant_node[pid]]] += delta[i]
    zone_of = {n.id: n.zone for n in nodes}

    def price(node):
        for label in (node, zone_of[node], "system"):
            if label in result.price_ids:
                return float(result.prices[result.price_ids.index(label)].mean())
        return float("nan")

    node_rows = [(n.id, n.lat, n.lon, price(n.id), float(net[i])) for i, n in enumerate(nodes)]
    line_rows = []
    for k, ln in enumerate(dataset.lines):
        if ln.capacity <= 0:
            log.warning("line %s has zero capacity; loading left empty", ln.id)
            loading = None
        elif result.flows is None:
            loading = None
        else:
            loading = float(np.mean(np.abs(result.flows[k]) / ln.capacity))
        line_rows.append((ln.id, ln.node_from, ln.node_to, loading))

    def fmt(v):
        return "" if v is None else format(float(v), ".10g")

    npath = os.path.join(out_dir, "geo_nodes.csv")
    with open(npath, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "lat", "lon", "price", "net_redispatch"])
        for nid, lat, lon, pr, nr in node_rows:
            w.writerow([nid, fmt(lat), fmt(lon), fmt(pr), fmt(nr)])
    lpath = os.path.join(out_dir, "geo_lines.csv")
    with open(lpath, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["line", "from", "to", "avg_loading_fraction"])
        for lid, a, b, loading in line_rows:
            w.writerow([lid, a, b, fmt(loading)])
    features = [
        {
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [lon, lat]},
            "properties": {"node": nid, "price": pr, "net_redispatch": nr},
        }
        for nid, lat, lon, pr, nr in node_rows
    ]
    for lid, a, b, loading in line_rows:
        na, nb = nodes[pos[a]], nodes[pos[b]]
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "LineString", "coordinates": [[na.lon, na.lat], [nb.lon, nb.lat]]},
                "properties": {"line": lid, "from": a, "to": b, "avg_loading_fraction": loading},
            }
        )
    gpath = os.path.join(out_dir, "geo.geojson")
    with open(gpath, "w", encoding="utf-8") as fh:
        json.dump({"type": "FeatureCollection", "features": features}, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return [npath, lpath, gpath]


class _Stage:
    def __init__(self, manifest, name):
        self.manifest = manifest
        self.name = name

    def __enter__(self):
        _STAGE.stage = self.name
        self.t0 = time.perf_counter()
        log.info("start")
        return self

    def __exit__(self, exc_type, exc, tb):
        self.manifest.timings[self.name] = round(time.perf_counter() - self.t0, 6)
        if exc is None:
            self.manifest.stages.append(self.name)
            log.info("done in %.3f s", self.manifest.timings[self.name])
        elif not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        _STAGE.stage = "main"
        return False


def _exit_code(exc):
    if isinstance(exc, (DataError, GridError, FileNotFoundError)):
        return EXIT_DATA
    if isinstance(exc, (MarketError, SolveError, FbmcError, RedundancyError)):
        return EXIT_SOLVE
    return EXIT_INTERNAL


def run_pipeline(dataset_path, options_path, out_dir, cache_dir=None, use_cache=True) -> RunManifest:
    """Run every configured stage and write all outputs under ``out_dir``.

    The reduced constraint set is cached in ``<out_dir>/cache`` unless
    ``cache_dir`` points elsewhere or ``use_cache`` is false. Stage failures
    leave partial outputs and a manifest with ``status = "failed"``.
    """
    if not Path(options_path).exists():
        raise FileNotFoundError(f"options file {options_path} not found")
    if not Path(dataset_path).exists():
        raise FileNotFoundError(f"dataset {dataset_path} not found")
    options = load_options(options_path)
    os.makedirs(out_dir, exist_ok=True)
    manifest = RunManifest(options_hash(options), str(dataset_path), str(out_dir))
    manifest.warnings += list(options.warnings)
    if use_cache and cache_dir is None:
        cache_dir = os.path.join(out_dir, "cache")
    if not use_cache:
        cache_dir = None
    try:
        _pipeline(dataset_path, options, out_dir, cache_dir, manifest)
        manifest.status = "ok"
    except StageError as exc:
        manifest.status = "failed"
        manifest.failed_stage = exc.stage
        manifest.error = f"{type(exc.cause).__name__}: {exc.cause}"
        manifest.exit_code = _exit_code(exc.cause)
        log.error("stage %s failed: %s", exc.stage, exc.cause)
    finally:
        manifest.write()
    return manifest


def _pipeline(dataset_path, options, out_dir, cache_dir, manifest):
    with _Stage(manifest, "load"):
        dataset = load_any(dataset_path, options)
        report = dataset.validation_report
        manifest.warnings += [str(f) for f in report.warnings] + [str(f) for f in dataset.import_findings]
        if not report.valid:
            raise DataError("; ".join(str(f) for f in report.errors[:10]))
        dataset._check_horizon(options.timesteps)

    with _Stage(manifest, "grid"):
        topo = build_topology(dataset)
        ptdf = compute_ptdf(topo)
        scenarios = enumerate_contingencies(topo, options, ptdf) if options.contingency.enabled else []
        manifest.warnings += [f"contingency {s.id} islands the network; excluded" for s in scenarios if s.islanding]
        full = build_security_constraints(ptdf, scenarios)
        grid = full
        if options.redundancy_removal and len(full):
            grid, info = reduce_grid(full, dataset, cache_dir)
            manifest.cache = {k: v for k, v in info.items() if k != "stats"}
            if "stats" in info:
                manifest.cache["stats"] = {k: v for k, v in info["stats"].items() if k != "seconds"}

    fb = None
    if options.type == "zonal_fbmc":
        with _Stage(manifest, "basecase"):
            base_cfg = MarketConfig("nodal", bool(scenarios), options.timesteps, options, None, ptdf)
            basecase = run_market(dataset, grid, base_cfg)
        with _Stage(manifest, "fb_parameters"):
            if options.gsk_strategy == "basecase":
                keys = {t: compute_gsk(dataset, basecase, "basecase", t) for t in options.timesteps}
                fb = compute_fb_parameters(ptdf, full, None, basecase, options, dataset, gsk_per_timestep=keys)
            else:
                gsk = compute_gsk(dataset, basecase, options.gsk_strategy)
                fb = compute_fb_parameters(ptdf, full, gsk, basecase, options, dataset)
            write_fb_parameters(fb, os.path.join(out_dir, "fb_parameters.csv"))

    with _Stage(manifest, "market"):
        kind = options.type
        cfg = MarketConfig(kind, bool(scenarios) and kind == "nodal", options.timesteps, options, fb, ptdf)
        market = run_market(dataset, grid if kind == "nodal" else None, cfg)
        manifest.warnings += market.warnings

    results = {"objective": {"market": market.objective}}
    redispatch = None
    if options.redispatch.include:
        with _Stage(manifest, "redispatch"):
            redispatch = run_redispatch(dataset, grid, market, options, ptdf)
            manifest.warnings += redispatch.warnings
            results["objective"]["redispatch"] = redispatch.objective

    with _Stage(manifest, "report"):
        if market.flows is not None:
            results["market_n0"] = len(overloaded_lines_n0(market, ptdf))
            results["market_n1"] = len(overloaded_lines_n1(market, ptdf, scenarios))
        write_results(market, os.path.join(out_dir, "market"))
        if redispatch is not None:
            results["redispatch_n0"] = len(overloaded_lines_n0(redispatch, ptdf))
            results["redispatch_n1"] = len(overloaded_lines_n1(redispatch, ptdf, scenarios))
            mwh = redispatch_quantity(market, redispatch)
            results["redispatch_mwh"] = 0.0 if abs(mwh) < 1e-9 else mwh
            write_results(redispatch, os.path.join(out_dir, "redispatch"))
            emit_geo_data(redispatch, dataset, out_dir, market)
        elif market.flows is not None:
            emit_geo_data(market, dataset, out_dir)
        _, _, doc = write_report(results, out_dir)
        manifest.report = doc
        for line in open(os.path.join(out_dir, "report.txt"), encoding="utf-8"):
            print(line.rstrip())


# --------------------------------------------------------------------- CLI
def _cmd_run(args):
    manifest = run_pipeline(args.data, args.options, args.out, args.cache, not args.no_cache)
    return manifest.exit_code


def _cmd_validate(args):
    options = load_options(args.options) if args.options else Options()
    dataset = load_any(args.data, options)
    for f in list(dataset.validation_report.findings) + list(dataset.import_findings):
        print(f)
    n_err = len(dataset.validation_report.errors)
    print(f"{n_err} errors, {len(dataset.validation_report.warnings)} warnings")
    return EXIT_OK if n_err == 0 else EXIT_DATA


def _cmd_reduce(args):
    options = load_options(args.options)
    dataset = load_any(args.data, options)
    if not dataset.valid:
        raise DataError("dataset has validation errors")
    topo = build_topology(dataset)
    ptdf = compute_ptdf(topo)
    scenarios = enumerate_contingencies(topo, options, ptdf) if options.contingency.enabled else []
    full = build_security_constraints(ptdf, scenarios)
    reduced, info = reduce_grid(full, dataset, args.out)
    stats = {k: v for k, v in info.items() if k != "stats"}
    stats.update({k: v for k, v in info.get("stats", {}).items() if k != "seconds"})
    with open(os.path.join(args.out, "reduction.json"), "w", encoding="utf-8") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    print(f"kept {len(reduced)} of {len(full)} rows")
    return EXIT_OK


def _cmd_domain(args):
    options = load_options(args.options)
    dataset = load_any(args.data, options)
    if not dataset.valid:
        raise DataError("dataset has validation errors")
    zx, zy = [z.strip() for z in args.zones.split(",")]
    topo = build_topology(dataset)
    ptdf = compute_ptdf(topo)
    scenarios = enumerate_contingencies(topo, options, ptdf) if options.contingency.enabled else []
    full = build_security_constraints(ptdf, scenarios)
    base = run_market(dataset, full, MarketConfig("nodal", bool(scenarios), options.timesteps, options, None, ptdf))
    if options.gsk_strategy == "basecase":
        gsk = compute_gsk(dataset, base, "basecase", args.t)
    else:
        gsk = compute_gsk(dataset, base, options.gsk_strategy)
    fb = compute_fb_parameters(ptdf, full, gsk, base, options, dataset)
    poly = project_domain(fb, args.t, zx, zy)
    paths = write_domain(poly, args.out)
    if poly.empty:
        print(f"empty domain: {poly.diagnostic}")
    else:
        print(f"{len(poly.vertices)} vertices written to {paths[0]}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="gridmarket", description="Zonal and nodal market clearing with redispatch.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run the full pipeline")
    p.add_argument("--data", required=True, help="dataset directory, zip archive or Matpower .m file")
    p.add_argument("--options", required=True, help="options JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--cache", default=None, help="reduction cache directory (default <out>/cache)")
    p.add_argument("--no-cache", action="store_true", help="always recompute the constraint reduction")
    p.set_defaults(func=_cmd_run)
    p = sub.add_parser("validate", help="validate a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--options", default=None)
    p.set_defaults(func=_cmd_validate)
    p = sub.add_parser("reduce", help="reduce the network constraint set only")
    p.add_argument("--data", required=True)
    p.add_argument("--options", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_reduce)
    p = sub.add_parser("domain", help="2D flow-based domain slice")
    p.add_argument("--data", required=True)
    p.add_argument("--options", required=True)
    p.add_argument("--zones", required=True, help="two zones, e.g. A,B")
    p.add_argument("--t", type=int, default=0, help="timestep")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_domain)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(logging.DEBUG if args.verbose else logging.INFO)
    if getattr(args, "out", None):
        os.makedirs(args.out, exist_ok=True)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        log.error("startup: %s", exc)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes
        code = _exit_code(exc)
        log.error("%s: %s", type(exc).__name__, exc)
        return code


if __name__ == "__main__":
    sys.exit(main())
