import csv
import json

import pytest
from click.testing import CliRunner

from cadkit import geometry as geo
from cadkit.cli import main
from cadkit.harness import (
    CheckRecord,
    ConfigError,
    ExperimentConfig,
    Report,
    StageError,
    emit_report,
    run_pipeline,
    svg_plot,
)


def run_cli(tmp_path, pipeline, cfg, *extra):
    path = tmp_path / f"{pipeline}.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / f"out_{pipeline}"
    res = CliRunner().invoke(main, [pipeline, "--config", str(path), "--out", str(out), *extra])
    return res, out


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"pipeline": "grid", "depth": 0})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"pipeline": "grid", "bogus": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"pipeline": "grid", "epsilon": 0.3})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"pipeline": "nope"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"pipeline": "grid", "domain": "no_such_file.json"})


def test_hash_ignores_output_dir():
    a = ExperimentConfig.from_dict({"pipeline": "grid", "out": "a"})
    b = ExperimentConfig.from_dict({"pipeline": "grid", "out": "b"})
    c = ExperimentConfig.from_dict({"pipeline": "grid", "depth": 5})
    assert a.hash == b.hash != c.hash
    assert len(a.hash) == 16


def test_domain_file(tmp_path):
    path = tmp_path / "sq.json"
    geo.save_domain(geo.unit_square(), path)
    cfg = ExperimentConfig.from_dict({"pipeline": "grid", "domain": str(path), "depth": 4})
    assert cfg.build_domain().length == pytest.approx(4.0)


def test_empty_report(tmp_path):
    rep = Report("grid", "0" * 16, "0.1.0")
    emit_report(rep, tmp_path)
    data = json.loads((tmp_path / "report.json").read_text())
    assert data["records"] == [] and data["passed"] is True
    rows = list(csv.reader((tmp_path / "checks.csv").open()))
    assert len(rows) == 1
    assert not (tmp_path / "timings.json").exists()


def test_svg_points():
    rows = [{"r": 2.0**-k, "value": 0.1 * k} for k in range(8)]
    svg = svg_plot(rows, "r", "value")
    assert svg.count("<circle") == 8 and svg.startswith("<svg")
    assert svg_plot([], "r", "value").count("<circle") == 0


def test_record_fields(tmp_path):
    rep = Report("grid", "abc", "0.1.0", [CheckRecord("c", "plumbing", "AC1", {"x": 1.0}, True, "exact", 0.5)])
    emit_report(rep, tmp_path, timings=True)
    row = list(csv.DictReader((tmp_path / "checks.csv").open()))[0]
    assert row["criterion"] == "AC1" and row["passed"] == "1"
    assert "runtime" not in json.loads((tmp_path / "report.json").read_text())["records"][0]
    assert json.loads((tmp_path / "timings.json").read_text()) == {"c": 0.5}


def test_classify_disk(tmp_path):
    res, out = run_cli(tmp_path, "classify", {"domain": "disk", "depth": 4})
    assert res.exit_code == 0, res.output
    files = sorted(p.name for p in out.iterdir())
    assert [f for f in files if f.endswith(".json")] == ["report.json"]
    assert len([f for f in files if f.endswith(".csv")]) == 2
    rep = json.loads((out / "report.json").read_text())
    assert rep["tables"]["verdict"] == [{"verdict": "CAD"}]
    assert rep["config_hash"] in (out / "checks.csv").read_text()
    assert all(r["criterion"].startswith("AC") for r in rep["records"])
    assert "PASS" in res.output


def test_rerun_byte_identical(tmp_path):
    cfg = {"domain": "disk", "depth": 3, "walks": 500}
    r1, o1 = run_cli(tmp_path, "harmonic_measure", cfg)
    first = {p.name: p.read_bytes() for p in o1.iterdir()}
    r2, o2 = run_cli(tmp_path, "harmonic_measure", cfg)
    assert r1.exit_code == r2.exit_code == 0
    assert first == {p.name: p.read_bytes() for p in o2.iterdir()}


def test_ainfty_to_nta_lipschitz():
    rep = run_pipeline(ExperimentConfig.from_dict({"pipeline": "ainfty_to_nta", "domain": "lipschitz", "depth": 5}))
    rec = {r.check: r for r in rep.records}
    assert rec["packing"].passed
    assert rec["exterior_from_packing"].constants["witnesses"] == rec["exterior_from_packing"].constants["top_cubes"]


def test_kp_appendix_ladder(tmp_path):
    res, out = run_cli(tmp_path, "kp_appendix", {"domain": "half_plane", "coefficient": "kp_t_profile", "pitch": 1 / 32})
    assert res.exit_code == 0, res.output
    rows = list(csv.DictReader((out / "ladder.csv").open()))
    assert len(rows) == 7
    assert (out / "ladder.svg").read_text().count("<circle") == 7


def test_cli_errors(tmp_path):
    res, _ = run_cli(tmp_path, "grid", {"depth": 99})
    assert res.exit_code == 1 and "depth" in res.output
    res, _ = run_cli(tmp_path, "boundary_estimates", {"domain": "disk", "pole": [3.0, 0.0], "pitch": 1 / 16})
    assert res.exit_code == 1


def test_stage_error_names_stage():
    cfg = ExperimentConfig.from_dict({"pipeline": "boundary_estimates", "domain": "disk", "pole": [3.0, 0.0], "pitch": 1 / 16})
    with pytest.raises(StageError) as exc:
        run_pipeline(cfg)
    assert exc.value.stage


def test_cli_override_flags(tmp_path):
    res, out = run_cli(tmp_path, "grid", {"domain": "square"}, "--depth", "3", "--timings")
    assert res.exit_code == 0
    assert (out / "timings.json").exists()
    assert json.loads((out / "report.json").read_text())["pipeline"] == "grid"
