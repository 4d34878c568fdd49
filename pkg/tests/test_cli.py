import json

import pytest

from gridmarket import cli
from gridmarket.dataio import fixture_path
from gridmarket.solver import SolveError


def _options(tmp_path, **doc):
    base = {"type": "copper_plate", "model_horizon": [0, 1], "redispatch": {"include": True}}
    base.update(doc)
    p = tmp_path / "options.json"
    p.write_text(json.dumps(base))
    return p


def test_two_node_pipeline(tmp_path):
    out = tmp_path / "out"
    man = cli.run_pipeline(fixture_path("two_node"), _options(tmp_path), out)
    assert man.status == "ok" and man.exit_code == 0
    assert man.stages == ["load", "grid", "market", "redispatch", "report"]
    assert set(man.timings) == set(man.stages)
    text = (out / "report.txt").read_text()
    assert "Number of N-0 Overloads (market): 1" in text
    assert "Number of N-0 Overloads (redispatch): 0" in text
    assert "Total Redispatch in MWh: 100" in text
    doc = json.loads((out / "manifest.json").read_text())
    on_disk = sorted(str(p.relative_to(out)) for p in out.rglob("*") if p.is_file())
    assert doc["files"] == on_disk
    assert doc["options_hash"] == man.options_hash and len(man.options_hash) == 64


def test_geo_outputs(tmp_path):
    out = tmp_path / "out"
    cli.run_pipeline(fixture_path("two_node"), _options(tmp_path), out)
    nodes = (out / "geo_nodes.csv").read_text().splitlines()
    assert nodes[0] == "node,lat,lon,price,net_redispatch"
    assert nodes[1].startswith("n1,52.52,13.4,") and nodes[1].endswith(",-50")
    assert (out / "geo_lines.csv").read_text().splitlines()[1] == "l1,n1,n2,1"
    geo = json.loads((out / "geo.geojson").read_text())
    assert geo["type"] == "FeatureCollection" and len(geo["features"]) == 3


def test_geo_skipped_without_coordinates(tmp_path):
    out = tmp_path / "out"
    man = cli.run_pipeline(fixture_path("three_node_ring"), _options(tmp_path), out)
    assert man.status == "ok"
    assert not (out / "geo_nodes.csv").exists()


def test_reduction_cache_is_reused(tmp_path):
    opts = _options(tmp_path, type="nodal", contingency={"enabled": True})
    cache = tmp_path / "cache"
    first = cli.run_pipeline(fixture_path("case30.m"), opts, tmp_path / "a", cache_dir=cache)
    second = cli.run_pipeline(fixture_path("case30.m"), opts, tmp_path / "b", cache_dir=cache)
    assert first.cache["cache"] == "miss" and second.cache["cache"] == "hit"
    assert first.report == second.report


def test_fbmc_pipeline_stages(tmp_path):
    man = cli.run_pipeline(fixture_path("two_node"), _options(tmp_path, type="zonal_fbmc"), tmp_path / "o")
    assert man.stages == ["load", "grid", "basecase", "fb_parameters", "market", "redispatch", "report"]
    assert (tmp_path / "o" / "fb_parameters.csv").exists()


def test_invalid_dataset_fails_in_load(tmp_path):
    import shutil

    d = tmp_path / "bad"
    shutil.copytree(fixture_path("two_node"), d)
    (d / "lines.csv").write_text("id,node_from,node_to,reactance,capacity,contingency\nl1,n1,n2,0,50,true\n")
    man = cli.run_pipeline(d, _options(tmp_path), tmp_path / "o")
    assert man.status == "failed" and man.failed_stage == "load" and man.exit_code == 1
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["status"] == "failed"


def test_solve_error_exit_code(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise SolveError("iteration limit")

    monkeypatch.setattr(cli, "run_market", boom)
    man = cli.run_pipeline(fixture_path("two_node"), _options(tmp_path), tmp_path / "o")
    assert (man.failed_stage, man.exit_code) == ("market", 2)
    assert man.stages == ["load", "grid"]


def test_internal_error_exit_code(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise ZeroDivisionError("bug")

    monkeypatch.setattr(cli, "redispatch_quantity", boom)
    man = cli.run_pipeline(fixture_path("two_node"), _options(tmp_path), tmp_path / "o")
    assert (man.failed_stage, man.exit_code) == ("report", 3)


def test_main_run_and_stage_logging(tmp_path, capfd):
    code = cli.main(["run", "--data", str(fixture_path("two_node")), "--options", str(_options(tmp_path)), "--out", str(tmp_path / "o")])
    assert code == 0
    err = capfd.readouterr().err
    assert "[load] INFO start" in err and "[redispatch] INFO done" in err


def test_main_missing_options(tmp_path):
    code = cli.main(["run", "--data", str(fixture_path("two_node")), "--options", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")])
    assert code == 1


def test_main_validate(tmp_path, capsys):
    assert cli.main(["validate", "--data", str(fixture_path("two_node"))]) == 0
    assert "0 errors" in capsys.readouterr().out


def test_main_reduce(tmp_path):
    opts = _options(tmp_path, type="nodal", contingency={"enabled": True})
    assert cli.main(["reduce", "--data", str(fixture_path("case9.m")), "--options", str(opts), "--out", str(tmp_path / "r")]) == 0
    stats = json.loads((tmp_path / "r" / "reduction.json").read_text())
    assert stats["essential"] < stats["rows"]


def test_main_domain(tmp_path, capsys):
    opts = _options(tmp_path, type="zonal_fbmc")
    code = cli.main(["domain", "--data", str(fixture_path("two_node")), "--options", str(opts), "--zones", "A,B", "--t", "0", "--out", str(tmp_path / "d")])
    assert code == 0
    assert (tmp_path / "d" / "domain_A_B_0.svg").exists()
    assert "4 vertices" in capsys.readouterr().out


def test_write_report_without_redispatch(tmp_path):
    txt, js, doc = cli.write_report({"market_n0": 2, "market_n1": None}, tmp_path)
    assert "redispatch" not in doc
    assert open(txt).read().splitlines() == ["Number of N-0 Overloads (market): 2", "Number of N-1 Overloads (market): n/a"]


def test_parser_requires_subcommand():
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args([])
