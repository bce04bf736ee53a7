import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from eqselect.cli import (
    EXIT_INTEGRATION,
    EXIT_OK,
    EXIT_PARSE,
    EXIT_REJECTED,
    fmt,
    main,
)

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

PD_SETPOINT = """
[payoff]
a = 1
b = 3
c = 0
d = 2

[problem]
kind = set_point
target = 0.5
"""


def write(tmp_path, text, name="scenario.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.mark.parametrize(
    "payoff, line",
    [
        ("1 3 0 2", "dominant-strategy, NE = all action 1"),
        ("0 2 1 3", "dominant-strategy, NE = all action 2"),
        ("1 0 0 1", "coordination, x* = 0.5"),
        ("0 1 1 0", "anti-coordination, x* = 0.5"),
        ("1 0 1 0", "degenerate (a = c or d = b), no strict class"),
    ],
)
def test_classify(capsys, payoff, line):
    code, out, _ = run(capsys, "classify", *payoff.split())
    assert code == EXIT_OK
    assert out.splitlines()[0] == line


def test_classify_lists_uncontrolled_limits(capsys):
    _, out, _ = run(capsys, "classify", 1, 0, 0, 1)
    assert "from x0 = 0.3: 0" in out and "from x0 = 0.7: 1" in out


def test_classify_rejects_non_numbers(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["classify", "1", "x", "0", "2"])
    assert exc.value.code == EXIT_PARSE


def test_empty_config_is_a_parse_error(capsys, tmp_path):
    code, _, err = run(capsys, "simulate", write(tmp_path, ""))
    assert code == EXIT_PARSE and "error" in err


def test_unknown_key_reports_its_location(capsys, tmp_path):
    path = write(tmp_path, PD_SETPOINT + "colour = blue\n")
    code, _, err = run(capsys, "simulate", path)
    assert code == EXIT_PARSE
    assert f"{path}:" in err and "[problem] colour" in err


def test_missing_file_is_a_parse_error(capsys, tmp_path):
    code, _, _ = run(capsys, "simulate", tmp_path / "absent.ini")
    assert code == EXIT_PARSE


def test_simulate_reaching(capsys, tmp_path):
    traj_path = tmp_path / "traj.csv"
    code, out, _ = run(capsys, "simulate", SCENARIOS / "reach_conformity.ini", "--trajectory", traj_path)
    assert code == EXIT_OK
    metrics = json.loads(out)
    assert list(metrics) == ["x_final", "g_final", "J_g", "g_max", "converged", "settle_time", "terminal_reason"]
    assert metrics["converged"] is True and metrics["x_final"] < 1e-3


def test_trajectory_csv_format_and_metrics_round_trip(capsys, tmp_path):
    traj_path = tmp_path / "traj.csv"
    _, out, _ = run(capsys, "simulate", SCENARIOS / "setpoint_dominant.ini", "--trajectory", traj_path)
    metrics = json.loads(out)
    raw = traj_path.read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    rows = list(csv.reader(raw.decode("utf-8").splitlines()))
    assert rows[0] == ["t", "x", "g"]
    for row in rows[1:]:
        for cell in row:
            assert "e" not in cell.lower()
            assert len(cell.replace("-", "").replace(".", "").lstrip("0")) <= 12
    t, x, g = np.array(rows[1:], dtype=float).T
    assert np.all(np.diff(t) > 0) and t[-1] == 500
    assert np.trapezoid(g, t) == pytest.approx(metrics["J_g"], rel=1e-9)
    assert g.max() == pytest.approx(metrics["g_max"], rel=1e-9)
    assert (x[-1], g[-1]) == pytest.approx((metrics["x_final"], metrics["g_final"]), rel=1e-9)


def test_number_format():
    assert fmt(0.1) == "0.1"
    assert fmt(1 / 3) == "0.333333333333"
    assert fmt(2.0) == "2"
    assert fmt(123456.7890123456) == "123456.789012"
    assert fmt(1.5e-7) == "0.00000015"


def test_forbidden_controller_needs_force(capsys):
    path = SCENARIOS / "stabilize_innovation_forbidden.ini"
    code, _, err = run(capsys, "simulate", path)
    assert code == EXIT_REJECTED and "impossibility proposition" in err
    code, out, _ = run(capsys, "simulate", path, "--force")
    assert code == EXIT_OK
    assert json.loads(out)["converged"] is False


def test_integration_failure_exit_code(capsys, tmp_path):
    text = (SCENARIOS / "stabilize_conformity.ini").read_text()
    text = text.replace("g0 = 0.01", "g0 = 100")
    text += "rel_tol = 1e-12\nabs_tol = 1e-12\ndt_min = 0.05\n"
    code, out, err = run(capsys, "simulate", write(tmp_path, text))
    assert code == EXIT_INTEGRATION and "dt_min" in err
    assert json.loads(out)["terminal_reason"] == "StepFailure"


def test_gain_overflow_is_reported_in_metrics(capsys):
    code, out, _ = run(capsys, "simulate", SCENARIOS / "stabilize_conformity.ini")
    assert code == EXIT_OK
    m = json.loads(out)
    assert m["terminal_reason"] == "GainOverflow" and m["converged"] is False


def test_design_setpoint(capsys, tmp_path):
    code, out, _ = run(capsys, "design", write(tmp_path, PD_SETPOINT))
    assert code == EXIT_OK
    got = json.loads(out)
    assert {k: got[k] for k in ("matrix", "rate", "p", "gbar")} == {"matrix": "G3", "rate": "proportional", "p": 0.5, "gbar": 2.0}
    assert got["conditions"]["passed"]


def test_design_reaching(capsys, tmp_path):
    text = "[payoff]\na = 1\nb = 0\nc = 0\nd = 1\n[problem]\nkind = consensus_reaching\ntarget = 0\ndelta = 0.4\n"
    code, out, _ = run(capsys, "design", write(tmp_path, text))
    got = json.loads(out)
    assert code == EXIT_OK and (got["matrix"], got["rate"], got["delta"]) == ("G3", "power_shifted", 0.4)


def test_design_needs_the_side_of_the_mixed_equilibrium(capsys, tmp_path):
    text = "[payoff]\na = 0\nb = 1\nc = 1\nd = 0\n[problem]\nkind = set_point\ntarget = 0.25\n"
    code, _, err = run(capsys, "design", write(tmp_path, text))
    assert code == EXIT_REJECTED and "side_of_mixed_ne" in err


@pytest.mark.parametrize("name", ["setpoint_dominant.ini", "setpoint_anticoordination.ini"])
def test_verify_setpoint(capsys, name):
    code, out, _ = run(capsys, "verify", SCENARIOS / name)
    report = json.loads(out)
    assert code == EXIT_OK and report["passed"] and report["lyapunov"]["passed"]
    assert [e["tag"] for e in report["equilibria"]][-1] == "stable"


def test_verify_forbidden_runs_the_negative_test(capsys):
    code, out, _ = run(capsys, "verify", SCENARIOS / "stabilize_innovation_forbidden.ini")
    report = json.loads(out)
    assert code == EXIT_OK and report["negative_test"]["verdict"] == "FailsAsPredicted"


def test_sweep_default_grid(capsys, tmp_path):
    out_path = tmp_path / "sweep.csv"
    code, _, _ = run(capsys, "sweep", SCENARIOS / "reach_innovation.ini", "--output", out_path, "--workers", 2)
    assert code == EXIT_OK
    rows = list(csv.reader(out_path.read_text().splitlines()))
    assert rows[0] == ["p", "q", "J_g", "g_max", "g_final", "x_final", "converged", "settle_time"]
    assert len(rows) == 31


def test_single_cell_sweep_matches_simulate(capsys, tmp_path):
    path = SCENARIOS / "reach_conformity.ini"
    _, out, _ = run(capsys, "simulate", path)
    sim = json.loads(out)
    _, out, _ = run(capsys, "sweep", path, "--p-grid", "7", "--q-grid", "1", "--workers", 1)
    rows = list(csv.DictReader(out.splitlines()))
    assert len(rows) == 1
    for key in ("J_g", "g_max", "g_final", "x_final"):
        assert float(rows[0][key]) == pytest.approx(sim[key], rel=1e-11)
    assert rows[0]["converged"] == "true"
    assert float(rows[0]["settle_time"]) == sim["settle_time"]


def test_sweep_marks_blown_up_cells(capsys):
    _, out, _ = run(capsys, "sweep", SCENARIOS / "stabilize_conformity.ini", "--p-grid", "0.4,8", "--q-grid", "1", "--workers", 1)
    rows = list(csv.DictReader(out.splitlines()))
    assert [r["converged"] for r in rows] == ["false", "true"]


def test_outputs_are_byte_identical(tmp_path):
    cmd = [sys.executable, "-m", "eqselect"]
    outputs = []
    for k in range(2):
        traj = tmp_path / f"t{k}.csv"
        sweep_csv = tmp_path / f"s{k}.csv"
        sim = subprocess.run(cmd + ["simulate", str(SCENARIOS / "setpoint_dominant.ini"), "--trajectory", str(traj)], capture_output=True, check=True)
        subprocess.run(cmd + ["sweep", str(SCENARIOS / "reach_innovation.ini"), "--p-grid", "0.5,1,2", "--q-grid", "1,2", "--output", str(sweep_csv)], check=True)
        outputs.append((sim.stdout, traj.read_bytes(), sweep_csv.read_bytes()))
    assert outputs[0] == outputs[1]
