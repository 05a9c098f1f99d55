import copy
import json

import numpy as np
import pytest

from ergoloop.config import (BUILTIN, ConfigError, build_initial_conditions, build_scenario, builtin_config,
                             config_hash, load_config, scenario_to_config, validate_config)
from ergoloop.simulate import run


@pytest.fixture
def toy1():
    return builtin_config("toy1")


@pytest.mark.parametrize("name", BUILTIN)
def test_builtins_validate(name):
    cfg = builtin_config(name)
    assert validate_config(cfg) is cfg
    assert len(build_initial_conditions(cfg)) >= 2


def test_toy_parameters():
    t1 = builtin_config("toy1")
    assert [e["size"] for e in t1["topology"]["ensembles"]] == [50, 100]
    assert t1["topology"]["u"] == [120.0, 120.0]
    assert t1["simulation"]["horizon"] == 1800 and t1["simulation"]["runs"] == 10
    ctrl = t1["topology"]["controllers"]
    assert [(c["alpha"], c["beta"], c["kappa"]) for c in ctrl] == [(-4.01, 0.99, 0.1)] * 2
    assert [c["period"] for c in ctrl] == [40, 20]
    t2 = builtin_config("toy2")
    assert [e["size"] for e in t2["topology"]["ensembles"]] == [60, 20]
    assert t2["topology"]["u"] == [20.0]
    assert [(c["alpha"], c["beta"], c["kappa"], c["period"]) for c in t2["topology"]["controllers"]] == \
        [(-4.01, 0.99, 0.1, 20)]


def test_modeled_curves_are_flagged(toy1):
    for ens in toy1["topology"]["ensembles"]:
        assert all(p["provenance"] == "modeled" for p in ens["agent"]["b_probs"])


def errors_of(cfg):
    with pytest.raises(ConfigError) as info:
        validate_config(cfg)
    return info.value.errors


def test_negative_horizon_pointer(toy1):
    toy1["simulation"]["horizon"] = -5
    assert errors_of(toy1)[0][0] == "/simulation/horizon"


def test_unknown_key_rejected(toy1):
    toy1["topology"]["controllers"][0]["gain"] = 1.0
    pointer, msg = errors_of(toy1)[0]
    assert pointer.startswith("/topology/controllers/0")
    assert "gain" in msg


def test_missing_parameter(toy1):
    del toy1["topology"]["ensembles"][1]["agent"]["A"]
    pointer, msg = errors_of(toy1)[0]
    assert pointer.startswith("/topology/ensembles/1")


def test_semantic_errors_carry_pointer(toy1):
    toy1["topology"]["ensembles"][0]["agent"]["A"] = [[0.8, 0.1]]
    pointer, _ = errors_of(toy1)[0]
    assert pointer.startswith("/topology/ensembles/0")
    cfg = builtin_config("toy1")
    cfg["topology"]["u"] = [1.0]
    assert errors_of(cfg)


def test_error_message_lists_every_problem(toy1):
    toy1["simulation"]["horizon"] = 0
    toy1["simulation"]["runs"] = 0
    errs = errors_of(toy1)
    assert {p for p, _ in errs} == {"/simulation/horizon", "/simulation/runs"}
    assert "/simulation/runs" in str(ConfigError(errs))


def test_load_config(tmp_path, toy1):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(toy1))
    assert load_config(path) == toy1
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(path)


def test_config_hash_is_key_order_independent(toy1):
    shuffled = json.loads(json.dumps(toy1, sort_keys=True))
    assert config_hash(shuffled) == config_hash(toy1)
    other = copy.deepcopy(toy1)
    other["simulation"]["seed"] = 1
    assert config_hash(other) != config_hash(toy1)


@pytest.mark.parametrize("name", BUILTIN)
def test_round_trip_reruns_identically(name):
    cfg = builtin_config(name)
    sc = build_scenario(cfg, {"horizon": 300})
    dumped = scenario_to_config(sc, runs=2, diagnostics=cfg.get("diagnostics"))
    validate_config(dumped)
    back = build_scenario(json.loads(json.dumps(dumped)))
    for i in (0, 3):
        assert np.array_equal(run(sc, i).data, run(back, i).data)


def test_overrides(toy1):
    sc = build_scenario(toy1, {"horizon": 7, "seed": 3, "granularity": "per_agent"})
    assert (sc.horizon, sc.seed, sc.granularity) == (7, 3, "per_agent")
    assert build_scenario(toy1).horizon == 1800


def test_unknown_builtin():
    with pytest.raises(ValueError, match="toy1"):
        builtin_config("toy3")
