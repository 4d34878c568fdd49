import json
import shutil
import zipfile

import pytest

from gridmarket.dataio import (
    DataError,
    OptionsError,
    fixture_path,
    import_matpower_case,
    load_dataset,
    load_fixture,
    load_options,
    options_from_dict,
    validate_dataset,
    write_dataset,
)


def _copy(tmp_path, name="two_node"):
    dst = tmp_path / name
    shutil.copytree(fixture_path(name), dst)
    return dst


def test_two_node_fixture_counts():
    ds = load_fixture("two_node")
    assert (len(ds.nodes), len(ds.lines), len(ds.plants)) == (2, 1, 2)
    assert ds.valid
    assert ds.validation_report.errors == []


def test_archive_equals_directory(tmp_path):
    src = fixture_path("two_node")
    archive = tmp_path / "two_node.zip"
    with zipfile.ZipFile(archive, "w") as zf:
        for f in src.iterdir():
            zf.write(f, f.name)
    a, b = load_dataset(src), load_dataset(archive)
    assert a.nodes == b.nodes and a.lines == b.lines and a.plants == b.plants and a.demand == b.demand


def test_dangling_node_reference(tmp_path):
    d = _copy(tmp_path)
    (d / "lines.csv").write_text("id,node_from,node_to,reactance,capacity,contingency\nl1,n1,X,1,50,true\n")
    with pytest.raises(DataError, match="lines"):
        ds = load_dataset(d)
        ds.node_ids()


def test_missing_table(tmp_path):
    d = _copy(tmp_path)
    (d / "plants.csv").unlink()
    with pytest.raises(DataError, match="plants"):
        load_dataset(d)


def test_zero_reactance_is_one_error(tmp_path):
    d = _copy(tmp_path)
    (d / "lines.csv").write_text("id,node_from,node_to,reactance,capacity,contingency\nl1,n1,n2,0,50,true\n")
    ds = load_dataset(d)
    assert len(ds.validation_report.errors) == 1
    assert not ds.valid


def test_heat_plant_without_area(tmp_path):
    d = _copy(tmp_path)
    rows = (d / "plants.csv").read_text().splitlines()
    rows[1] = "p1,n1,10,100,5,,,0,,"
    (d / "plants.csv").write_text("\n".join(rows) + "\n")
    ds = load_dataset(d)
    assert [f.table for f in ds.validation_report.errors] == ["plants"]


def test_invalid_dataset_blocks_accessors(tmp_path):
    d = _copy(tmp_path)
    (d / "lines.csv").write_text("id,node_from,node_to,reactance,capacity,contingency\nl1,n1,n2,-1,50,true\n")
    ds = load_dataset(d)
    with pytest.raises(DataError):
        ds.demand_matrix()


def test_zero_capacity_warns(tmp_path):
    d = _copy(tmp_path)
    (d / "lines.csv").write_text("id,node_from,node_to,reactance,capacity,contingency\nl1,n1,n2,1,0,true\n")
    ds = load_dataset(d)
    assert ds.valid
    assert any("zero capacity" in f.message for f in ds.validation_report.warnings)


@pytest.mark.parametrize("name", ["two_node", "three_node_ring", "storage_heat"])
def test_round_trip(tmp_path, name):
    ds = load_fixture(name)
    write_dataset(ds, tmp_path / name)
    again = load_dataset(tmp_path / name)
    for attr in ("nodes", "zones", "lines", "plants", "ntcs", "demand", "heat_demand", "availability", "timesteps"):
        assert getattr(again, attr) == getattr(ds, attr), attr


def test_matpower_case9():
    ds = load_fixture("case9.m")
    assert (len(ds.nodes), len(ds.lines), len(ds.plants)) == (9, 9, 3)
    assert ds.valid


def test_matpower_areas_become_zones():
    ds = load_fixture("case30.m")
    assert len(ds.zones) == len({n.zone for n in ds.nodes}) > 1
    # every tie gets an NTC in both directions
    pairs = {(n.zone_from, n.zone_to) for n in ds.ntcs}
    assert all((b, a) in pairs for a, b in pairs)


def test_matpower_quadratic_cost_rejected(tmp_path):
    text = fixture_path("case9.m").read_text()
    bad = tmp_path / "quad.m"
    bad.write_text(text.replace("2\t0\t0\t2\t32.5\t0;", "2\t0\t0\t3\t0.11\t5\t150;"))
    with pytest.raises(DataError, match="nonlinear"):
        import_matpower_case(bad)


def test_matpower_zero_rate_surrogate(tmp_path):
    lines = fixture_path("case9.m").read_text().splitlines()
    k = next(i for i, l in enumerate(lines) if l.startswith("mpc.branch")) + 1
    parts = lines[k].split()
    parts[5] = "0"
    lines[k] = "\t" + "\t".join(parts)
    path = tmp_path / "zero_rate.m"
    path.write_text("\n".join(lines) + "\n")
    ds = import_matpower_case(path)
    assert ds.valid
    assert ds.lines[0].capacity > 0 and ds.lines[0].capacity == max(l.capacity for l in ds.lines)
    assert any("surrogate" in f.message for f in ds.validation_report.warnings)


def test_options_snippet():
    doc = {"optimization": {"type": "dispatch", "model_horizon": [0, 168], "redispatch": {"include": True, "cost": 50}}}
    o = options_from_dict(doc)
    assert o.type == "copper_plate"
    assert o.redispatch.include is True and o.redispatch.cost == 50
    assert o.timesteps == list(range(168))


def test_options_defaults():
    o = options_from_dict({})
    assert o.type == "nodal" and o.model_horizon == (0, 1) and not o.redispatch.include
    assert o.warnings == []


def test_options_empty_horizon():
    with pytest.raises(OptionsError, match="model_horizon"):
        options_from_dict({"model_horizon": [5, 5]})


def test_options_type_mismatch_names_path():
    with pytest.raises(OptionsError, match=r"\$\.redispatch\.include"):
        options_from_dict({"redispatch": {"include": "yes"}})


def test_options_unknown_key_warns():
    o = options_from_dict({"colour": "blue"})
    assert o.warnings == ["$.colour: unknown option ignored"]


def test_load_options_file(tmp_path):
    p = tmp_path / "o.json"
    p.write_text(json.dumps({"type": "ntc", "contingency": {"enabled": True}}))
    o = load_options(p)
    assert o.type == "zonal_ntc" and o.contingency.enabled
    p.write_text("{not json")
    with pytest.raises(OptionsError):
        load_options(p)


def test_validate_reports_findings_not_raises():
    ds = load_fixture("two_node")
    ds.lines[0].reactance = 0.0
    rep = validate_dataset(ds)
    assert len(rep.errors) == 1


def test_unknown_fixture():
    with pytest.raises(DataError):
        fixture_path("nope")


def test_injection_bounds_two_node():
    ds = load_fixture("two_node")
    assert ds.injection_bounds().tolist() == [100.0, 200.0]
