import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from minimax_bvp.cli import EXIT_ERROR, EXIT_NEGATIVE, EXIT_OK, run

SMALL = ["--grid-steps", "256"]


def call(*argv):
    out = io.StringIO()
    code = run(list(argv), stdout=out)
    return code, out.getvalue()


def write_config(tmp_path, config, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(config))
    return str(path)


DAMPED = {
    "system": {"omega": "2*pi", "A": [["-1", "0"], ["0", "-1"]], "B": [["1", "0"], ["0", "1"]],
               "H": [["1", "0"], ["0", "1"]]},
    "grid": {"steps": 128},
    "functional": ["0", "0"],
    "observation": {"simulate": {"input": ["0", "0"]}},
}


def test_check_exit_codes():
    code, text = call("check", "--example", "integrator-l1", *SMALL)
    assert code == EXIT_NEGATIVE
    report = json.loads(text)
    assert report["feasible"] is False
    assert report["defect"] == pytest.approx(2 * math.pi, abs=1e-5)
    assert call("check", "--example", "integrator-l2", *SMALL)[0] == EXIT_OK


def test_contract_scenario_names_are_accepted():
    assert call("check", "--example", "thm3-l1", *SMALL)[0] == EXIT_NEGATIVE
    assert call("check", "--example", "thm3-l2", *SMALL)[0] == EXIT_OK


def test_zero_functional_is_feasible_with_zero_error(tmp_path):
    cfg = write_config(tmp_path, DAMPED)
    assert call("check", "--config", cfg)[0] == EXIT_OK
    code, text = call("estimate", "--config", cfg)
    assert code == EXIT_OK and json.loads(text)["sigma_hat"] == 0.0


def test_estimate_renders_infinity():
    code, text = call("estimate", "--example", "integrator-l1", *SMALL)
    assert code == EXIT_NEGATIVE
    assert json.loads(text)["sigma_hat"] == "inf"


def test_estimate_writes_trajectory(tmp_path):
    code, _ = call("estimate", "--example", "integrator-l2", *SMALL, "--out", str(tmp_path))
    assert code == EXIT_OK
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["sigma_hat"] == pytest.approx(math.pi, rel=1e-5)
    rows = list(csv.reader((tmp_path / "trajectory.csv").open()))
    assert rows[0] == ["t", "u1", "u2", "z1", "z2", "p1", "p2"]
    t = np.array([float(r[0]) for r in rows[1:]])
    assert t.size == 257 and t[0] == 0.0 and t[-1] == pytest.approx(2 * math.pi, rel=1e-15)
    assert np.all(np.diff(t) > 0)


def test_reconstruct_reports_error_norm(tmp_path):
    code, text = call("reconstruct", "--example", "oscillator", "--out", str(tmp_path))
    assert code == EXIT_OK
    report = json.loads(text)
    assert report["observation"] == "configured"
    assert report["error_norm"] == pytest.approx(1.81682, abs=1e-4)
    rows = list(csv.reader((tmp_path / "trajectory.csv").open()))
    assert rows[0] == ["t", "x_hat1", "x_hat2", "p_hat1", "p_hat2"]
    assert len(rows) == 2049 + 1


def test_reconstruct_zero_observation(tmp_path):
    cfg = dict(DAMPED, observation={"expressions": ["0", "0"]}, truth=["0", "0"])
    code, text = call("reconstruct", "--config", write_config(tmp_path, cfg))
    assert code == EXIT_OK and json.loads(text)["error_norm"] == 0.0


def test_reconstruct_from_simulation_recovers_periodic_motion(tmp_path):
    cfg = {
        "system": {"omega": "2*pi", "A": [["0", "-1"], ["1", "0"]], "B": [["1"], ["0"]], "H": [["1", "0"]]},
        "grid": {"steps": 512},
        "observation": {"simulate": {"input": ["0"], "initial_state": [0.5, 2.0]}},
        "truth": ["0.5*cos(t) - 2*sin(t)", "0.5*sin(t) + 2*cos(t)"],
    }
    code, text = call("reconstruct", "--config", write_config(tmp_path, cfg))
    report = json.loads(text)
    assert code == EXIT_OK and report["observation"] == "simulated"
    assert report["error_norm"] <= 1e-5 * math.sqrt(2 * math.pi * 4.25)


def test_simulate_matches_reference_and_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert call("simulate", "--example", "oscillator", "--out", str(a))[0] == EXIT_OK
    assert call("simulate", "--example", "oscillator", "--out", str(b))[0] == EXIT_OK
    assert (a / "observation.csv").read_bytes() == (b / "observation.csv").read_bytes()
    data = np.loadtxt(a / "observation.csv", delimiter=",", skiprows=1)
    t = data[:, 0]
    ref = np.stack([0.05 + 0.0159155 * t + 0.1 * np.sin(t), 0.5 + 0.159155 * t + 0.1 * np.sin(t)], 1)
    assert np.abs(data[:, 1:] - ref).max() <= 1e-4


def test_simulate_seeded_noise(tmp_path):
    cfg = json.loads(json.dumps(DAMPED))
    cfg["observation"]["simulate"]["noise"] = {"kind": "random", "shape": ["1", "1"], "scale": 0.1, "seed": 3}
    path = write_config(tmp_path, cfg)
    _, one = call("simulate", "--config", path, "--format", "csv")
    _, two = call("simulate", "--config", path, "--format", "csv")
    _, other = call("simulate", "--config", path, "--format", "csv", "--seed", "4")
    assert one == two and one != other


def test_simulate_zero_case(tmp_path):
    code, text = call("simulate", "--config", write_config(tmp_path, DAMPED), "--format", "csv")
    data = np.loadtxt(io.StringIO(text), delimiter=",", skiprows=1)
    assert code == EXIT_OK and not data[:, 1:].any()
    assert data.shape == (129, 3)


def test_simulate_incompatible_input(tmp_path):
    cfg = {
        "system": {"omega": "2*pi", "A": [["0"]], "B": [["1"]], "H": [["1"]]},
        "observation": {"simulate": {"input": ["1"]}},
        "grid": {"steps": 64},
    }
    assert call("simulate", "--config", write_config(tmp_path, cfg))[0] == EXIT_ERROR


def test_csv_report_format():
    code, text = call("check", "--example", "integrator-l2", *SMALL, "--format", "csv")
    rows = dict(list(csv.reader(io.StringIO(text)))[1:])
    assert rows["feasible"] == "True"
    assert float(rows["P[1][1]"]) == pytest.approx(1.0)


def test_examples_table_and_exit_code():
    code, text = call("examples", "integrator-l1")
    assert code == EXIT_OK and "all passed" in text
    code, text = call("examples", "oscillator")
    assert code == EXIT_NEGATIVE and "FAIL" in text
    code, text = call("examples", "integrator-l2", "--format", "json")
    assert json.loads(text)["passed"] is True


@pytest.mark.parametrize(
    "argv",
    [
        ["check", "--config", "/nonexistent.json"],
        ["check", "--example", "integrator-l1", "--grid-steps", "7"],
        ["examples", "integrator-l1", "--grid-steps", "3"],
    ],
)
def test_errors_exit_one(argv, capsys):
    assert call(*argv)[0] == EXIT_ERROR
    assert capsys.readouterr().err.startswith("error:")


def test_config_error_names_field(tmp_path, capsys):
    bad = json.loads(json.dumps(DAMPED))
    bad["system"]["A"][0][1] = "sin("
    assert call("check", "--config", write_config(tmp_path, bad))[0] == EXIT_ERROR
    assert "system.A[0][1]" in capsys.readouterr().err


def test_missing_functional(tmp_path, capsys):
    cfg = {k: v for k, v in DAMPED.items() if k != "functional"}
    assert call("estimate", "--config", write_config(tmp_path, cfg))[0] == EXIT_ERROR
    assert "functional" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["examples", "nope"], ["check"], ["frobnicate"]])
def test_usage_errors_exit_one(argv):
    with pytest.raises(SystemExit) as info:
        run(argv)
    assert info.value.code == EXIT_ERROR


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "minimax_bvp", "check", "--example", "integrator-l2", "--grid-steps", "64"],
        capture_output=True, text=True, timeout=120,
    )
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["feasible"] is True
