import hashlib
import json

import pytest

from icsrisk import cli, milp, model
from icsrisk.solver.external import run_highs_file

from conftest import study

NUM = "builtin:numerical"


def run(*argv):
    return cli.main([str(a) for a in argv])


def _manifest(out):
    return json.loads((out / "manifest.json").read_text())


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "scenario.json"
    doc = model.scenario_to_dict(study(T=30, K=2), model.SimSection(replications=20, horizon=300))
    path.write_text(json.dumps(doc))
    return path


def test_validate_ok_and_invalid(tmp_path, scenario_file, capsys):
    assert run("validate", scenario_file, "--out", tmp_path / "v") == 0
    doc = json.loads(scenario_file.read_text())
    doc["plant"]["B"][1] = [0.0, 0.0, 0.0]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    assert run("validate", bad, "--out", tmp_path / "w") == 2
    assert "rank" in capsys.readouterr().out
    assert run("validate", tmp_path / "missing.json", "--out", tmp_path / "w") == 2


def test_attack_plan_passes_audit(tmp_path, scenario_file):
    out = tmp_path / "a"
    assert run("attack", scenario_file, "--K", 3, "--T", 30, "--out", out) == 0
    plan = milp.AttackPlan.from_dict(json.loads((out / "plan.json").read_text()))
    sc = model.load_scenario(scenario_file)[0].with_(K=3)
    assert milp.audit_plan(sc, plan) == []
    listed = {e["file"] for e in _manifest(out)["outputs"]}
    assert listed == {"plan.json", "summary.json", "scenario.json"}


def test_fixed_mode_with_empty_schedule(tmp_path, scenario_file):
    out = tmp_path / "f"
    assert run("attack", scenario_file, "--mode", "fixed_intrusion", "--out", out) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert all(v is None for v in summary["compromise_time"].values())
    sc = study(T=30, K=2)
    assert summary["objective"] == pytest.approx(milp.state_weights(sc)[1], rel=1e-12)


def test_infeasible_exit_code(tmp_path, scenario_file):
    assert run("attack", scenario_file, "--T", 10, "--out", tmp_path / "i") == 3


def test_limit_exit_code(tmp_path, scenario_file):
    code = run("attack", scenario_file, "--solver", "embedded", "--node-limit", 2,
               "--out", tmp_path / "l")
    assert code == 4


def test_export_import_round_trip(tmp_path, scenario_file):
    out = tmp_path / "x"
    assert run("attack", scenario_file, "--export-lp", "model.lp", "--out", out) == 0
    assert (out / "model.lp").exists() and not (out / "plan.json").exists()
    assert run_highs_file(out / "model.lp", tmp_path / "model.sol") == "optimal"
    assert run("attack", scenario_file, "--import-solution", tmp_path / "model.sol",
               "--out", tmp_path / "y") == 0
    assert run("attack", scenario_file, "--out", tmp_path / "z") == 0
    imported = json.loads((tmp_path / "y" / "summary.json").read_text())["objective"]
    direct = json.loads((tmp_path / "z" / "summary.json").read_text())["objective"]
    assert imported == pytest.approx(direct, rel=1e-6)


def test_import_rejects_foreign_solution(tmp_path, scenario_file):
    (tmp_path / "junk.sol").write_text("not_a_column 1\n")
    assert run("attack", scenario_file, "--import-solution", tmp_path / "junk.sol",
               "--out", tmp_path / "j") == 2


def test_simulate_outputs(tmp_path, scenario_file):
    assert run("attack", scenario_file, "--out", tmp_path / "a") == 0
    out = tmp_path / "s"
    assert run("simulate", scenario_file, tmp_path / "a" / "plan.json", "--out", out) == 0
    lines = (out / "ttf.csv").read_text().splitlines()
    assert lines[0] == "replication,ttf,censored" and len(lines) == 21
    assert (out / "histogram.svg").read_text().startswith("<?xml")
    summary = json.loads((out / "summary.json").read_text())
    assert summary["proxy_mttf"] is not None and summary["replications"] == 20


def test_manifest_digests(tmp_path, scenario_file):
    out = tmp_path / "c"
    assert run("calibrate", scenario_file, "--replications", 5, "--out", out) == 0
    man = _manifest(out)
    assert man["command"] == "calibrate"
    assert man["scenario_sha256"] == hashlib.sha256(scenario_file.read_bytes()).hexdigest()
    for entry in man["outputs"]:
        assert hashlib.sha256((out / entry["file"]).read_bytes()).hexdigest() == entry["sha256"]
    cal = json.loads((out / "calibration.json").read_text())
    assert set(cal["bounds"]) == {"low", "moderate", "high"}


def test_output_directory_from_environment(tmp_path, scenario_file, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert run("validate", scenario_file) == 0
    assert (tmp_path / "env" / "manifest.json").exists()


def test_sweep_is_byte_identical(tmp_path, scenario_file):
    args = ["sweep", scenario_file, "--K-list", "1,2", "--T-list", "30", "--levels", "low,high",
            "--seed", 4]
    assert run(*args, "--out", tmp_path / "r1") == 0
    assert run(*args, "--out", tmp_path / "r2", "--jobs", 2) == 0
    for name in ("sweep.csv", "sweep.svg", "manifest.json"):
        a, b = (tmp_path / "r1" / name).read_bytes(), (tmp_path / "r2" / name).read_bytes()
        if name == "manifest.json":
            ja, jb = json.loads(a), json.loads(b)
            assert ja["outputs"] == jb["outputs"]
        else:
            assert a == b
    rows = (tmp_path / "r1" / "sweep.csv").read_text().splitlines()
    assert len(rows) == 5


def test_compare_table(tmp_path, scenario_file):
    out = tmp_path / "cmp"
    assert run("compare", scenario_file, "--K", 1, "--random-plans", 3, "--fixed", "c3=28",
               "--out", out) == 0
    rows = (out / "compare.csv").read_text().splitlines()
    assert rows[0].startswith("attack,status,objective")
    names = [r.split(",")[0] for r in rows[1:]]
    assert names == ["worst_case", "random", "fixed_intrusion", "damage_norm"]
    worst = float(rows[1].split(",")[2])
    fixed = float(rows[3].split(",")[2])
    assert worst <= fixed + 1e-9


def test_builtin_scenarios(tmp_path):
    assert run("validate", "builtin:bwpp", "--out", tmp_path / "b") == 0
    assert run("validate", "builtin:numerical:low:2", "--out", tmp_path / "n") == 0
    assert run("validate", "builtin:nothing", "--out", tmp_path / "n") == 2


def test_level_names(tmp_path, scenario_file):
    for level in ("low", "moderate", "high"):
        assert run("attack", scenario_file, "--level", level, "--out", tmp_path / level) == 0
    with pytest.raises(SystemExit):
        run("attack", scenario_file, "--level", "extreme")
