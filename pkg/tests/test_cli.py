import json
import math
from pathlib import Path

import numpy as np
import pytest
import yaml

from levyaa.cli import main
from levyaa.scenario import builtin_scenario, dump_scenario

SCENARIO_DIR = Path(__file__).resolve().parents[1] / "scenarios"
QUARTER = f"coefficients.phase={math.pi / 2!r}"


@pytest.fixture(autouse=True)
def output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("LEVYAA_OUTPUT_ROOT", str(tmp_path / "root"))
    return tmp_path / "root"


def scenario_file(tmp_path, **kw):
    return str(dump_scenario(builtin_scenario(**kw), tmp_path / "scn.yaml"))


def test_check_exit_codes(tmp_path, delta_star, capsys):
    assert main(["check", scenario_file(tmp_path, delta=delta_star / 2),
                 "--out", str(tmp_path / "ok.yaml")]) == 0
    assert capsys.readouterr().out.startswith("PASS")
    data = yaml.safe_load((tmp_path / "ok.yaml").read_text())
    assert data["all_pass"] and data["vartheta"] < 1
    assert main(["check", "paper_example_5", "--set",
                 f"coefficients.delta={2 * delta_star!r}"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_check_default_location(output_root):
    assert main(["check", "paper_example_5"]) == 0
    assert len(list(output_root.glob("*/hypotheses.yaml"))) == 1


def test_load_failures_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("coefficients: {family: paper_example_5, delta: [\n")
    assert main(["check", str(bad)]) == 2
    assert main(["check", str(tmp_path / "missing.yaml")]) == 2
    assert main(["check", "paper_example_5", "--set", "coefficients.colour=red"]) == 2
    assert "error" in capsys.readouterr().err
    assert main(["nonsense"]) == 2


def test_simulate_is_byte_deterministic(tmp_path):
    args = ["simulate", str(SCENARIO_DIR / "heat_quasiperiodic.yaml"), "--paths", "1",
            "--seed", "42", "--t1", "1", "--burn-in", "0.5"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "path_00000.csv").read_bytes()
    assert a == (tmp_path / "b" / "path_00000.csv").read_bytes()
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["seed"] == 42 and man["n_paths"] == 1 and man["outputs"] == ["path_00000.csv"]
    assert man["grid"] == {"t_start": 0.0, "t_end": 1.0, "dt": 0.01, "burn_in": 0.5}
    assert {"levyaa", "numpy", "scipy", "backend"} <= set(man["versions"])


def test_replay_reproduces_bytes(tmp_path):
    assert main(["simulate", "paper_example_5", "--set", QUARTER, "--paths", "2", "--t1", "1",
                 "--burn-in", "0.5", "--seed", "7", "--out", str(tmp_path / "a")]) == 0
    assert main(["simulate", "--replay", str(tmp_path / "a" / "manifest.json"),
                 "--out", str(tmp_path / "b")]) == 0
    for name in ("path_00000.csv", "path_00001.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert main(["simulate", "--replay", str(tmp_path / "nowhere")]) == 2


def test_simulate_unforced_gives_zero_paths(tmp_path):
    assert main(["simulate", str(SCENARIO_DIR / "unforced.yaml"), "--paths", "2", "--t1", "0.5",
                 "--burn-in", "0.5", "--out", str(tmp_path / "z")]) == 0
    data = np.loadtxt(tmp_path / "z" / "path_00001.csv", delimiter=",", skiprows=1)
    assert not data[:, 1:].any()


def test_simulate_records_self_convergence(tmp_path):
    assert main(["simulate", "paper_example_5", "--set", QUARTER, "--set",
                 "coefficients.delta=0.7", "--paths", "1", "--t1", "1", "--burn-in", "0.5",
                 "--convergence-check", "--convergence-paths", "4",
                 "--out", str(tmp_path / "c")]) == 0
    sc = json.loads((tmp_path / "c" / "manifest.json").read_text())["self_convergence"]
    assert 0.35 <= sc["ratio"] <= 0.7 and sc["passed"]


def test_simulate_convergence_failure_exit_1(tmp_path, capsys):
    assert main(["simulate", "paper_example_5", "--set", QUARTER, "--paths", "2", "--t1", "0.5",
                 "--burn-in", "0.5", "--tol", "1e-15", "--max-iter", "2",
                 "--out", str(tmp_path / "f")]) == 1
    assert "path 0" in capsys.readouterr().err


def test_simulate_bad_grid_exit_2(tmp_path):
    assert main(["simulate", "paper_example_5", "--dt", "0.3", "--t1", "1"]) == 2
    assert main(["simulate"]) == 2


AUTO = ["--paths", "4", "--t1", "0.5", "--burn-in", "0.5", "--t-step", "0.25",
        "--projection", "4"]


def test_automorphy_zero_amplitude_passes(tmp_path):
    out = tmp_path / "aa"
    assert main(["automorphy", "paper_example_5", "--set", "coefficients.delta=0.0",
                 "--shifts", "6.28", "12.57", "--out", str(out), "--svg"] + AUTO) == 0
    with open(out / "automorphy.csv") as fh:
        header = fh.readline().strip()
        betas = [float(line.split(",")[3]) for line in fh]
    assert header == "t,tau,epsilon,beta" and betas and all(b == 0 for b in betas)
    assert (out / "automorphy.svg").read_text().startswith("<svg")
    assert "result: PASS" in (out / "automorphy_summary.txt").read_text()


def test_automorphy_from_saved_ensembles(tmp_path, capsys):
    out = tmp_path / "aa"
    code = main(["automorphy", "paper_example_5", "--set", QUARTER, "--shifts", "6.28",
                 "--out", str(out), "--save-ensembles"] + AUTO)
    assert code in (0, 1)
    windows = sorted(str(p) for p in (out / "ensembles").iterdir())
    assert len(windows) == 3
    again = tmp_path / "again"
    assert main(["automorphy", "--ensembles", *windows, "--t-step", "0.25", "--projection", "4",
                 "--out", str(again)]) == code
    assert (out / "automorphy.csv").read_bytes() == (again / "automorphy.csv").read_bytes()
    assert main(["report", str(again)]) == 0
    assert (again / "automorphy.svg").exists()
    capsys.readouterr()


def test_automorphy_rejects_mismatched_hashes(tmp_path):
    out = tmp_path / "aa"
    main(["automorphy", "paper_example_5", "--set", QUARTER, "--shifts", "6.28",
          "--out", str(out), "--save-ensembles"] + AUTO)
    windows = sorted((out / "ensembles").iterdir())
    other = tmp_path / "other"
    assert main(["simulate", "paper_example_5", "--set", "coefficients.delta=0.3",
                 "--paths", "4", "--t0", "6.28", "--t1", "6.78", "--burn-in", "0.5",
                 "--out", str(other)]) == 0
    assert main(["automorphy", "--ensembles", str(windows[0]), str(other),
                 str(windows[2])]) == 2
    assert main(["automorphy", "--ensembles", str(windows[0])]) == 2
    assert main(["automorphy", "paper_example_5", "--ensembles", str(windows[0])]) == 2


def test_report_on_empty_directory(tmp_path):
    assert main(["report", str(tmp_path)]) == 2
