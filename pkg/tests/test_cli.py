import csv
import json
import subprocess
import sys

import pytest

from qborel.cli import main


def run_job(tmp_path, spec, *flags, name="out"):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(spec))
    out = tmp_path / name
    code = main(["--spec", str(path), "--out", str(out), *flags])
    report = json.loads((out / "report.json").read_text()) if (out / "report.json").exists() else None
    return code, report, out


def read_rows(out):
    with open(out / "points.csv") as fh:
        return list(csv.DictReader(fh))


EULER_SUM = {
    "command": "sum",
    "operator": "z*s + 1",
    "rhs": [0, 1],
    "q": 2,
    "lambda": 1,
    "points": {"annulus": [0.05, 1.0], "grid": [4, 5], "phase": 0.3},
}


def test_analyze_three_halves(tmp_path):
    code, rep, _ = run_job(tmp_path, {"command": "analyze", "operator": "z^4*s^4 + z*s^2 + s"})
    assert code == 0
    plan = rep["plan"]
    assert plan["slopes"] == ["1", "3/2"]
    assert plan["kappas"] == ["3", "3/2"]
    assert (plan["K"], plan["n"]) == (3, 3)


def test_analyze_euler_forbidden_direction(tmp_path):
    code, rep, _ = run_job(tmp_path, {"command": "analyze", "operator": "z*s + 1"})
    assert code == 0
    (d,) = rep["plan"]["forbidden_directions"]
    assert d["re"] == pytest.approx(-1) and d["im"] == pytest.approx(0, abs=1e-14)


def test_analyze_no_positive_slope(tmp_path):
    code, rep, _ = run_job(tmp_path, {"command": "analyze", "operator": "s + 1"})
    assert code == 3
    assert rep["plan"] is None
    code, _, _ = run_job(tmp_path, dict(EULER_SUM, operator="s + 1"), name="sum")
    assert code == 3


def test_parse_error_exit_code(tmp_path):
    code, _, _ = run_job(tmp_path, {"command": "analyze", "operator": "z**s"})
    assert code == 2


def test_missing_field_and_bad_json(tmp_path):
    code, _, _ = run_job(tmp_path, {"command": "sum", "operator": "z*s + 1"})
    assert code == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["--spec", str(bad), "--out", str(tmp_path / "x")]) == 2


def test_sum_euler(tmp_path):
    code, rep, out = run_job(tmp_path, EULER_SUM)
    assert code == 0
    assert rep["max_residual"] <= 1e-8 and rep["residual_ok"]
    assert rep["asymptotic"]["ok"]
    rows = read_rows(out)
    assert len(rows) == 20
    assert list(rows[0]) == ["z_re", "z_im", "S_re", "S_im", "residual_abs", "flag"]


def test_sum_near_pole_rows_are_flagged(tmp_path):
    spec = dict(EULER_SUM, points=[-2.0, 0.3], asymptotic=False)
    code, rep, out = run_job(tmp_path, spec)
    assert code == 0
    rows = read_rows(out)
    assert rows[0]["flag"] == "near_pole" and rows[0]["S_re"] == "nan"
    assert rows[1]["flag"] == "ok"
    assert rep["near_pole_points"] == 1


def test_sum_forbidden_direction(tmp_path):
    code, _, _ = run_job(tmp_path, dict(EULER_SUM, **{"lambda": -2}))
    assert code == 4


def test_sum_is_deterministic(tmp_path):
    spec = dict(EULER_SUM, asymptotic=False)
    _, _, a = run_job(tmp_path, spec, name="a")
    _, _, b = run_job(tmp_path, spec, name="b")
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    assert (a / "points.csv").read_bytes() == (b / "points.csv").read_bytes()


@pytest.mark.parametrize("q", [2, {"re": 1.3514533018536288, "im": 0.6508256086763372}])
def test_verify_passes(tmp_path, q):
    code, rep, _ = run_job(tmp_path, {"command": "verify", "q": q})
    assert code == 0 and rep["all_passed"]


def test_verify_catches_dropped_prefactor(tmp_path):
    code, rep, _ = run_job(tmp_path, {"command": "verify"}, "--debug-drop-prefactor")
    assert code == 1
    failed = {c["name"] for c in rep["checks"] if not c["passed"]}
    assert "laplace_of_one mu=3/2 K=3" in failed
    assert "laplace_of_one mu=1 K=1" not in failed  # mu/K = 1 there


def test_theta_command(tmp_path):
    code, rep, out = run_job(tmp_path, {"command": "theta", "points": [-1, 0, {"re": 0, "im": 0.5}]})
    assert code == 0
    rows = read_rows(out)
    assert [r["flag"] for r in rows] == ["ok", "undefined", "ok"]
    assert abs(complex(float(rows[0]["S_re"]), float(rows[0]["S_im"]))) <= 1e-12


def test_solve_command(tmp_path):
    code, rep, _ = run_job(tmp_path, {"command": "solve", "operator": "z*s + 1", "rhs": [0, 1], "N": 5})
    assert code == 0
    vals = [c["value"]["re"] for c in rep["coefficients"]]
    assert vals == pytest.approx([0, 1, -2, 8, -64, 1024], rel=1e-14)


def test_fundamental_command(tmp_path):
    spec = {"command": "fundamental", "n1": 0, "n2": 1, "C1": [[1]], "C2": [[1]],
            "U": {"0": [[-1]]}, "lambda": {"re": 0.7648421872844885, "im": 0.644217687237691},
            "points": [0.3, {"re": 0.1, "im": 0.2}]}
    code, rep, _ = run_job(tmp_path, spec)
    assert code == 0
    assert rep["K"] == 1
    assert rep["max_block_residual"] <= 1e-7 and rep["max_system_residual"] <= 1e-7


def test_fundamental_resonant(tmp_path):
    spec = {"command": "fundamental", "n1": 0, "n2": 1, "C1": [[1]], "C2": [[1]],
            "U": {"0": [[-1]]}, "lambda": 1, "points": [0.3]}
    code, _, _ = run_job(tmp_path, spec)
    assert code == 4


def test_module_entry_point(tmp_path):
    spec = tmp_path / "s.json"
    spec.write_text(json.dumps({"command": "analyze", "operator": "z*s + 1"}))
    res = subprocess.run([sys.executable, "-m", "qborel", "--spec", str(spec), "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads((tmp_path / "report.json").read_text())["command"] == "analyze"
