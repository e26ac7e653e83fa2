"""Config validation, catalogue, artifact layout, and the CLI surface."""

import json
import os

import numpy as np
import pytest

from weakbsde.cli import main
from weakbsde.runner import execute
from weakbsde.scenario import (ScenarioError, build_scenario, catalogue,
                               catalogue_scenario, config_sha256,
                               parse_scenario)


def _minimal(**overrides):
    cfg = {
        "name": "small",
        "lattice": {"horizon": 1.0, "steps": 4},
        "driver_f": {"name": "zero"},
        "driver_g": {"name": "zero"},
        "loss": {"name": "power", "params": {"p": 2.0}},
        "primal": {"grid_size": 81, "n_a": 9, "m_list": [0.25, 0.5]},
        "checks": ["attainment", "monotonicity", "weak_duality"],
    }
    cfg.update(overrides)
    return cfg


def test_unknown_keys_rejected_at_every_level():
    with pytest.raises(ScenarioError, match="unknown"):
        build_scenario(_minimal(extra_field=1))
    with pytest.raises(ScenarioError, match="unknown"):
        build_scenario(_minimal(lattice={"horizon": 1.0, "steps": 4,
                                         "tilt": 2}))
    with pytest.raises(ScenarioError, match="unknown"):
        build_scenario(_minimal(primal={"grid_size": 81, "spacing": 0.1}))
    with pytest.raises(ScenarioError, match="unknown"):
        build_scenario(_minimal(dual={"enabled": True, "step": 0.1}))
    with pytest.raises(ScenarioError, match="unknown"):
        build_scenario(_minimal(tolerances={"no_such_check": 1e-3}))


def test_level_guard_message_names_the_limit():
    with pytest.raises(ScenarioError, match="path enumeration guard"):
        build_scenario(_minimal(lattice={"horizon": 1.0, "steps": 30}))


def test_check_names_and_lists_validated():
    with pytest.raises(ScenarioError, match="unknown check"):
        build_scenario(_minimal(checks=["attainment", "smoothness"]))
    with pytest.raises(ScenarioError):
        build_scenario(_minimal(primal={"grid_size": 81, "m_list": [1.5]}))


def test_config_hash_ignores_key_order():
    a = _minimal()
    b = json.loads(json.dumps(a))
    b["loss"] = {"params": {"p": 2.0}, "name": "power"}  # reordered keys
    assert config_sha256(build_scenario(a).config) == \
        config_sha256(build_scenario(b).config)
    assert build_scenario(a).config_sha256 != config_sha256({"name": "other"})


def test_catalogue_is_stable_and_buildable():
    names = sorted(catalogue())
    assert names == ["call_spread", "envelope", "identity", "jensen",
                     "risk_pair", "tiny_identity", "tiny_power", "tiny_risk"]
    for name in names:
        sc = catalogue_scenario(name)
        assert sc.name == name
    with pytest.raises(ScenarioError, match="unknown catalogue"):
        catalogue_scenario("nope")


def test_parse_scenario_reports_json_position(tmp_path):
    bad = tmp_path / "broken.json"
    bad.write_text('{"name": "x",\n  "oops }')
    with pytest.raises(ScenarioError, match="line 2"):
        parse_scenario(bad)


def test_execute_writes_stable_artifacts(tmp_path):
    sc = build_scenario(_minimal())
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    rep1 = execute(sc, out_dir=out1, quiet=True)
    rep2 = execute(sc, out_dir=out2, quiet=True)
    assert rep1["status"] == "PASS"
    for fname in ("curve.csv", "surface.csv", "report.json"):
        b1 = (out1 / fname).read_bytes()
        b2 = (out2 / fname).read_bytes()
        assert b1 == b2, f"{fname} differs between identical runs"
    header = (out1 / "curve.csv").read_text().splitlines()[0]
    assert header == "m,primal,dual_bound,gap"
    surface_header = (out1 / "surface.csv").read_text().splitlines()[0]
    assert surface_header == "level,node,m,value,control"
    report = json.loads((out1 / "report.json").read_text())
    assert report["schema_version"] == 1
    assert report["provenance"]["config_sha256"] == sc.config_sha256
    assert {c["check"] for c in report["checks"]} == \
        {"attainment", "monotonicity", "weak_duality"}
    assert "time" not in json.dumps(report).lower()


def test_execute_report_curve_includes_dual_gap():
    sc = build_scenario(_minimal())
    report = execute(sc, out_dir=None, quiet=True)
    by_m = {row["m"]: row for row in report["curve"]}
    assert by_m[0.5]["primal"] == pytest.approx(0.25, abs=1e-12)
    assert by_m[0.5]["dual_bound"] == pytest.approx(0.25, abs=1e-6)
    assert by_m[0.5]["gap"] == pytest.approx(0.0, abs=1e-6)


def test_cli_run_and_exit_codes(tmp_path, capsys):
    cfg = _minimal()
    path = tmp_path / "scen.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "artifacts"
    assert main(["run", str(path), "--out", str(out), "--quiet"]) == 0
    assert sorted(os.listdir(out)) == ["curve.csv", "report.json",
                                       "surface.csv"]
    capsys.readouterr()
    assert main(["run", "no_such_scenario"]) == 2
    err = capsys.readouterr().err
    assert "neither a catalogue scenario" in err


def test_cli_env_var_sets_output_directory(tmp_path, monkeypatch):
    monkeypatch.setenv("WEAKBSDE_OUT", str(tmp_path / "envdir"))
    monkeypatch.chdir(tmp_path)
    assert main(["run", "tiny_power", "--quiet"]) == 0
    assert (tmp_path / "envdir" / "report.json").exists()


def test_cli_flag_overrides_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv("WEAKBSDE_OUT", str(tmp_path / "ignored"))
    target = tmp_path / "flagged"
    assert main(["run", "tiny_power", "--quiet", "--out", str(target)]) == 0
    assert target.exists()
    assert not (tmp_path / "ignored").exists()


def test_cli_curve_prints_schema_header(capsys):
    assert main(["curve", "tiny_power", "--quiet"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "m,primal,dual_bound,gap"
    assert lines[1].startswith("0.5,0.25")


def test_cli_dual_requires_enabled_search(capsys):
    assert main(["dual", "tiny_power"]) == 2
    assert "dual search disabled" in capsys.readouterr().err


def test_cli_verify_subset(capsys):
    assert main(["verify", "--only", "1", "2", "--quiet"]) == 0


def test_verify_empty_selection_is_skipped(capsys):
    from weakbsde.acceptance import verify_all
    summary = verify_all(only=[], quiet=False)
    assert summary["status"] == "SKIPPED"
    assert summary["n_fail"] == 0
    assert "SKIPPED" in capsys.readouterr().out
    with pytest.raises(ValueError, match="unknown criteria"):
        verify_all(only=[99], quiet=True)


def test_seed_flows_into_the_report(tmp_path):
    cfg = _minimal()
    cfg["seed"] = 1234
    sc = build_scenario(cfg)
    assert sc.seed == 1234
    report = execute(sc, out_dir=None, quiet=True)
    assert report["scenario"]["seed"] == 1234
