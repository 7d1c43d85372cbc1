import copy
import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from riemoc.cli import EXIT_NUMERIC, EXIT_OK, EXIT_SCENARIO, main
from riemoc.report import SCHEMA, content_hash
from riemoc.scenario import EXAMPLE_EXG, ScenarioError, builtin_scenario, load_scenario, scenario_from_dict

from helpers import EXAMPLE_F, HEIGHT, curvature_closed_form

MINIMAL = {
    "name": "flat-integrator",
    "manifold": {"kind": "flat", "dim": 1},
    "dynamics": {"m": 1, "f": ["u1"]},
    "control_set": {"kind": "box", "lower": [-1], "upper": [1]},
    "horizon": {"kind": "fixed", "T": 1.0},
    "endpoints": {"phi0": ["b1^2"]},
    "candidate": {"x0": [0], "control": {"kind": "constant", "value": [0]}},
    "singular_direction": {"v": {"kind": "constant", "value": [1]}},
    "numerics": {"steps": 100, "samples": 50},
}


def write(tmp_path, data, name="sc.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


# --- scenario loading ----------------------------------------------------------------


def test_builtin_example_fields():
    sc = builtin_scenario("example-exg", T=1.0)
    pr = sc.problem
    assert pr.manifold.dim == 2 and not pr.manifold.is_flat
    assert sc.raw["manifold"]["height"] == HEIGHT
    assert sc.raw["dynamics"]["f"] == EXAMPLE_F
    assert pr.control_set.kind == "ball" and pr.control_set.radius == 1.0
    assert sc.raw["endpoints"] == {"phi0": ["-b1^2", "-ln(1+b1^2+b2^2)"], "phi": ["a2"], "psi": ["a1", "b1^3+b2+T"]}
    assert np.allclose(sc.v, [0.0, 1.0]) and np.allclose(sc.sigma, [-0.5, 0.0])


def test_builtin_horizon_override():
    sc = builtin_scenario("example-exg", T=2.0, steps=400)
    assert sc.problem.T == 2.0 and sc.problem.N == 400


def test_minimal_flat_scenario_loads(tmp_path):
    sc = load_scenario(write(tmp_path, MINIMAL))
    assert sc.name == "flat-integrator" and sc.problem.manifold.is_flat
    assert sc.numerics.samples == 50


def test_missing_horizon_is_schema_error():
    d = copy.deepcopy(MINIMAL)
    del d["horizon"]
    with pytest.raises(ScenarioError, match="horizon") as ei:
        scenario_from_dict(d)
    assert ei.value.pointer == "/"


@pytest.mark.parametrize("expr, offset", [("x1 + * 2", 5), ("(x1", 3), ("x1 $ 2", 3)])
def test_expression_errors_carry_pointer_and_offset(expr, offset):
    d = copy.deepcopy(EXAMPLE_EXG)
    d["dynamics"]["f"][1] = expr
    with pytest.raises(ScenarioError, match=f"offset {offset}") as ei:
        scenario_from_dict(d)
    assert ei.value.pointer == "/dynamics/f/1"


@pytest.mark.parametrize(
    "mutate, pointer",
    [
        (lambda d: d["dynamics"]["f"].__setitem__(0, "x2"), "/dynamics/f/0"),
        (lambda d: d["endpoints"]["phi0"].__setitem__(0, "b2"), "/endpoints/phi0/0"),
        (lambda d: d["candidate"].__setitem__("x0", [0, 0]), "/candidate/x0"),
        (lambda d: d["numerics"].__setitem__("steps", 7), "/numerics/steps"),
        (lambda d: d["control_set"].__setitem__("lower", "x"), "/control_set"),
    ],
)
def test_invalid_scenarios(mutate, pointer):
    d = copy.deepcopy(MINIMAL)
    mutate(d)
    with pytest.raises(ScenarioError) as ei:
        scenario_from_dict(d)
    assert ei.value.pointer == pointer


def test_unreadable_scenario_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ScenarioError):
        load_scenario(str(bad))
    with pytest.raises(ScenarioError):
        load_scenario(str(tmp_path / "missing.json"))


# --- commands and exit codes ---------------------------------------------------------


def test_geometry_probe(capsys):
    code, out, _ = run(["geometry-probe", "--builtin", "example-exg", "--point", "0,-1"], capsys)
    assert code == EXIT_OK
    res = json.loads(out)["results"]
    assert res["curvature"] == pytest.approx(0.0, abs=1e-14)
    assert np.allclose(res["metric"], [[1, 0], [0, 2]], atol=1e-14)
    assert res["christoffel"][1][0][0] == pytest.approx(-0.5, abs=1e-14)


def test_multipliers_command(capsys):
    code, out, _ = run(["multipliers", "--builtin", "example-exg", "--steps", "200"], capsys)
    assert code == EXIT_OK
    fam = json.loads(out)["results"]["family"]
    assert len(fam["rays"]) == 3
    assert fam["labels"] == ["l0_1", "l0_2", "lphi_1", "lpsi_1", "lpsi_2"]


def test_invalid_scenario_exit_code(tmp_path, capsys):
    d = copy.deepcopy(MINIMAL)
    del d["horizon"]
    code, out, err = run(["simulate", "--scenario", write(tmp_path, d)], capsys)
    assert code == EXIT_SCENARIO and out == "" and "horizon" in err


def test_numerical_failure_exit_code(tmp_path, capsys):
    d = copy.deepcopy(MINIMAL)
    d["dynamics"]["f"] = ["1/x1"]
    code, _, err = run(["simulate", "--scenario", write(tmp_path, d)], capsys)
    assert code == EXIT_NUMERIC
    assert "numerical failure in state integration" in err and "node 0" in err


def test_unwritable_report_path(tmp_path, capsys):
    target = tmp_path / "no" / "such" / "dir" / "r.json"
    (tmp_path / "no").write_text("file, not a directory")
    code, _, err = run(["simulate", "--scenario", write(tmp_path, MINIMAL), "--report", str(target)], capsys)
    assert code != EXIT_OK and "cannot write" in err


@pytest.mark.parametrize("cmd", ["simulate", "multipliers", "check1", "singular", "check2", "check2-free", "certify"])
def test_every_command_runs_on_flat_scenario(tmp_path, capsys, cmd):
    code, out, _ = run([cmd, "--scenario", write(tmp_path, MINIMAL)], capsys)
    assert code == EXIT_OK
    rep = json.loads(out)
    assert rep["schema"] == SCHEMA and rep["command"] == cmd
    assert rep["verdict"] in (None, "certified-not-weak-pareto", "inconclusive", "infeasible-first-order",
                              "admissibility-failed")


def test_certify_flat_lq_is_inconclusive(tmp_path, capsys):
    code, out, _ = run(["certify", "--scenario", write(tmp_path, MINIMAL)], capsys)
    rep = json.loads(out)
    assert code == EXIT_OK and rep["verdict"] == "inconclusive"
    assert rep["results"]["min_margin"] <= 0.0


def test_inadmissible_candidate_verdict(tmp_path, capsys):
    d = copy.deepcopy(MINIMAL)
    d["candidate"]["control"]["value"] = [3]
    code, out, _ = run(["certify", "--scenario", write(tmp_path, d)], capsys)
    assert code == EXIT_OK and json.loads(out)["verdict"] == "admissibility-failed"


# --- reports -------------------------------------------------------------------------


def test_report_is_deterministic_and_reloads(tmp_path, capsys):
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for p in paths:
        assert main(["check2", "--builtin", "example-exg", "--steps", "200", "--report", str(p)]) == EXIT_OK
    capsys.readouterr()
    a, b = (json.loads(p.read_text()) for p in paths)
    assert a["content_hash"] == b["content_hash"]
    assert content_hash(a) == a["content_hash"]
    strip = lambda r: {k: v for k, v in r.items() if k != "timing"}  # noqa: E731
    assert json.dumps(strip(a)) == json.dumps(strip(b))
    assert list(a) == ["schema", "version", "command", "scenario_name", "scenario", "verdict", "results",
                       "content_hash", "timing"]


def test_exg_command_and_csv(tmp_path, capsys):
    rep_path, csv_path = tmp_path / "exg.json", tmp_path / "exg.csv"
    code = main(["exg", "--T", "1", "--steps", "2000", "--samples", "2000",
                 "--report", str(rep_path), "--csv", str(csv_path)])
    capsys.readouterr()
    assert code == EXIT_OK
    rep = json.loads(rep_path.read_text())
    assert rep["verdict"] == "certified-not-weak-pareto"
    assert rep["results"]["min_margin"] > 0
    with open(csv_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2001
    t = np.array([float(r["t"]) for r in rows])
    K = np.array([float(r["K"]) for r in rows])
    assert np.max(np.abs(K - curvature_closed_form(t))) <= 1e-10
    for col in ("x1", "x2", "p1", "p2", "X1", "X2", "curvature"):
        assert col in rows[0]


def test_batch_mode(tmp_path, capsys):
    src = tmp_path / "scenarios"
    src.mkdir()
    write(src, MINIMAL, "good.json")
    bad = copy.deepcopy(MINIMAL)
    del bad["horizon"]
    write(src, bad, "bad.json")
    out_dir = tmp_path / "out"
    code = main(["simulate", "--batch", str(src), "--report", str(out_dir), "--workers", "2"])
    printed = capsys.readouterr().out
    assert code == EXIT_SCENARIO
    assert (out_dir / "good.simulate.json").exists() and not (out_dir / "bad.simulate.json").exists()
    assert "[0]" in printed and "[2]" in printed


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "riemoc.cli", "geometry-probe", "--builtin", "example-exg",
                          "--point", "0.5,0"], capture_output=True, text=True, timeout=60)
    assert res.returncode == 0
    assert json.loads(res.stdout)["results"]["point"] == [0.5, 0.0]


SCENARIO_DIR = Path(__file__).resolve().parents[1] / "scenarios"


@pytest.mark.parametrize("path", sorted(SCENARIO_DIR.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_scenarios_load(path):
    sc = load_scenario(str(path))
    assert sc.name == path.stem


def test_shipped_example_matches_builtin():
    assert json.loads((SCENARIO_DIR / "example-exg.json").read_text()) == EXAMPLE_EXG


def test_free_horizon_scenario_extras(capsys):
    code, out, _ = run(["check2-free", "--scenario", str(SCENARIO_DIR / "time-dependent-scalar.json")], capsys)
    assert code == EXIT_OK
    res = json.loads(out)["results"]
    assert res["singular"]["singular"]
    (ray,) = res["rays"]
    # xi = 1 - t: only the xi * tau * dH/dt term survives, -int (t - t^2/2)(1 - t) dt = -1/8
    assert ray["breakdown"]["ft_xi_t"] == pytest.approx(-0.125, abs=1e-12)
    assert ray["sup"] == pytest.approx(-0.125, abs=1e-12)
