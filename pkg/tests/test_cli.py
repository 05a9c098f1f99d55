import csv
import json
import subprocess
import sys

import pytest

from ergoloop.cli import main
from ergoloop.config import builtin_config, validate_config


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def with_controllers(kind):
    cfg = builtin_config("toy1")
    if kind == "lag":
        block = {"type": "lag", "Kp": 0.1, "Ki": 0.01, "rho": 0.99}
    else:
        block = {"type": "pi", "Kp": 0.1, "Ki": 0.01}
    cfg["topology"]["controllers"] = [dict(block, period=40), dict(block, period=20)]
    return cfg


def discrete_config(tables, probs, horizon=4000):
    # constant zero signal from a Schur block, so the chain stays open-loop and certifiable
    hold = {"type": "state_space", "A": [[0.0]], "B": [[0.0]], "C": [[1.0]], "D": [[0.0]], "x0": [0.0]}
    agent = {"kind": "discrete", "n_states": len(tables[0]), "transition_maps": tables,
             "transition_probs": [{"family": "constant", "value": p, "floor": 0.1} for p in probs],
             "output_maps": [list(range(len(tables[0])))], "output_probs": [{"family": "constant", "value": 1.0}]}
    return {
        "name": "open-loop chain",
        "topology": {"kind": "two_sided", "ensembles": [{"size": 1, "agent": agent}, {"size": 2, "agent": agent}],
                     "controllers": [hold, hold], "pi0": [0.0, 0.0]},
        "simulation": {"horizon": horizon, "runs": 2, "seed": 0},
        "diagnostics": {"runs_per_ic": 2, "initial_conditions": [
            {"name": "zero", "ensembles": [[0], [0, 0]]},
            {"name": "two", "ensembles": [[2], [2, 1]]},
        ], "oracle": {"horizon": 20000, "tolerance": 0.05}},
    }


CIRCULANT = ([[0, 1, 2], [1, 2, 0]], [0.9, 0.1])


def test_simulate_toy1(tmp_path):
    out = tmp_path / "out"
    assert main(["simulate", "--config", write(tmp_path, builtin_config("toy1")), "--out", str(out)]) == 0
    runs = sorted((out / "trajectories").glob("run_*.csv"))
    assert len(runs) == 10
    for path in runs:
        body = rows(path)
        assert body[0] == ["k", "pi_1", "pi_2", "e_1", "e_2", "y_ens1", "y_ens2"]
        assert len(body) == 1 + 1800
    summary = rows(out / "summary.csv")
    assert len(summary) == 1 + 1800
    assert {"y_ens1_mean", "y_ens1_std", "pi_2_mean", "e_1_std"} <= set(summary[0])
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["run_indices"] == list(range(10)) and manifest["seed"] == 0
    assert set(manifest["artifacts"]) == {"summary.csv"} | {f"trajectories/run_{i}.csv" for i in range(10)}


def test_horizon_override(tmp_path):
    out = tmp_path / "out"
    cfg = write(tmp_path, builtin_config("toy2"))
    assert main(["simulate", "--config", cfg, "--out", str(out), "--horizon", "1", "--runs", "2",
                 "--seed", "5", "--granularity", "per_agent"]) == 0
    body = rows(out / "trajectories" / "run_1.csv")
    assert len(body) == 2 and len(body[0]) == 1 + 1 + 1 + 2 + 80
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["overrides"] == {"horizon": 1, "runs": 2, "seed": 5, "granularity": "per_agent"}
    assert manifest["config"]["simulation"]["horizon"] == 1


def test_invalid_config_writes_nothing(tmp_path, capsys):
    cfg = builtin_config("toy1")
    cfg["simulation"]["horizon"] = -3
    out = tmp_path / "out"
    assert main(["simulate", "--config", write(tmp_path, cfg), "--out", str(out)]) == 2
    assert not out.exists()
    assert "/simulation/horizon" in capsys.readouterr().err
    assert main(["simulate", "--config", str(tmp_path / "missing.json"), "--out", str(out)]) == 2
    (tmp_path / "bad.json").write_text("{")
    assert main(["certify", "--config", str(tmp_path / "bad.json"), "--out", str(out)]) == 2
    assert not out.exists()


def test_certify_exit_codes(tmp_path):
    out = tmp_path / "lag"
    assert main(["certify", "--config", write(tmp_path, with_controllers("lag")), "--out", str(out)]) == 0
    assert json.loads((out / "certification_report.json").read_text())["verdict"] == "certified_unique"

    out = tmp_path / "pi"
    assert main(["certify", "--config", write(tmp_path, with_controllers("pi")), "--out", str(out)]) == 1
    rep = json.loads((out / "certification_report.json").read_text())
    assert rep["verdict"] == "not_certified"
    assert any(c["name"] == "Schur(A_c)" and c["result"] == "fail" for c in rep["checks"])

    out = tmp_path / "cycle"
    cfg = discrete_config([[1, 0]], [1.0])
    cfg["topology"]["ensembles"][1]["agent"] = dict(cfg["topology"]["ensembles"][1]["agent"],
                                                    transition_maps=[[1, 0], [0, 1]], n_states=2,
                                                    output_maps=[[0, 1]],
                                                    transition_probs=[{"family": "constant", "value": 0.5,
                                                                       "floor": 0.1}] * 2)
    cfg["diagnostics"]["initial_conditions"] = []
    assert main(["certify", "--config", write(tmp_path, cfg), "--out", str(out)]) == 1
    assert json.loads((out / "certification_report.json").read_text())["verdict"] == "certified_existence"


def test_diagnose_needs_two_initial_conditions(tmp_path, capsys):
    cfg = builtin_config("toy1")
    cfg["diagnostics"]["initial_conditions"] = cfg["diagnostics"]["initial_conditions"][:1]
    out = tmp_path / "out"
    assert main(["diagnose", "--config", write(tmp_path, cfg), "--out", str(out)]) == 2
    assert "at least 2" in capsys.readouterr().err
    assert not out.exists()


def test_diagnose_open_loop_discrete_attaches_oracle(tmp_path):
    out = tmp_path / "out"
    assert main(["diagnose", "--config", write(tmp_path, discrete_config(*CIRCULANT)), "--out", str(out)]) == 0
    rep = json.loads((out / "ergodicity_report.json").read_text())
    assert rep["verdict"] == "consistent"
    oracle = rep["oracle"]
    assert oracle["passed"]
    assert [a["agent"] for a in oracle["agents"]] == ["y_ens1_1", "y_ens2_1", "y_ens2_2"]
    assert all(a["exact"] == pytest.approx(1.0, abs=1e-12) for a in oracle["agents"])


def test_diagnose_toy_reports_feasibility(tmp_path):
    cfg = builtin_config("toy2")
    cfg["topology"]["references"] = [40.0, 15.0]
    cfg["diagnostics"]["horizon"] = 400
    cfg["diagnostics"]["runs_per_ic"] = 1
    out = tmp_path / "out"
    main(["diagnose", "--config", write(tmp_path, cfg), "--out", str(out)])
    rep = json.loads((out / "ergodicity_report.json").read_text())
    assert set(rep["feasibility"]) == {"y_ens1", "y_ens2"}
    assert "oracle" not in rep


def test_reproduce_minimal(tmp_path):
    out = tmp_path / "out"
    main(["reproduce", "toy1", "--runs", "1", "--horizon", "1", "--out", str(out)])
    names = {p.name for p in out.rglob("*") if p.is_file()}
    assert names == {"run_0.csv", "summary.csv", "certification_report.json", "ergodicity_report.json",
                     "manifest.json"}
    manifest = json.loads((out / "manifest.json").read_text())
    validate_config(manifest["config"])
    assert manifest["command"] == "reproduce toy1"
    assert len(rows(out / "trajectories" / "run_0.csv")) == 2


def test_workers_from_environment(tmp_path, monkeypatch):
    cfg = write(tmp_path, builtin_config("toy2"))
    monkeypatch.setenv("ERGOLOOP_WORKERS", "2")
    out = tmp_path / "env"
    assert main(["simulate", "--config", cfg, "--out", str(out), "--horizon", "50", "--runs", "4"]) == 0
    assert json.loads((out / "manifest.json").read_text())["workers"] == 2
    monkeypatch.setenv("ERGOLOOP_WORKERS", "many")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "bad"), "--horizon", "5"]) == 2


def test_artifacts_are_deterministic(tmp_path):
    cfg = write(tmp_path, builtin_config("toy2"))
    outs = [tmp_path / "a", tmp_path / "b"]
    for i, out in enumerate(outs):
        assert main(["simulate", "--config", cfg, "--out", str(out), "--horizon", "300",
                     "--workers", str(i + 1)]) == 0
        assert main(["certify", "--config", cfg, "--out", str(out / "cert")]) == 0
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file() and p.name != "manifest.json")
    assert files
    for rel in files:
        assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes()
    m = [json.loads((o / "manifest.json").read_text()) for o in outs]
    assert m[0]["artifacts"] == m[1]["artifacts"] and m[0]["config_hash"] == m[1]["config_hash"]


def test_run_failure_reported(tmp_path, capsys):
    cfg = builtin_config("toy2")
    agent = cfg["topology"]["ensembles"][0]["agent"]
    agent["A"] = [[1e200]]
    agent["x0"] = [1.0]
    out = tmp_path / "out"
    assert main(["simulate", "--config", write(tmp_path, cfg), "--out", str(out), "--runs", "2",
                 "--horizon", "10"]) == 1
    err = capsys.readouterr().err
    assert "step" in err and "ensemble[0]" in err
    assert json.loads((out / "manifest.json").read_text())["failures"]


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "ergoloop.cli", "certify", "--config",
                          write(tmp_path, with_controllers("pi")), "--out", str(tmp_path / "o")],
                         capture_output=True, text=True)
    assert res.returncode == 1
    assert "[FAIL] Schur(A_c)" in res.stdout
