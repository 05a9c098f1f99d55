"""Scenario configuration: JSON schema, validation, building and dumping."""

from __future__ import annotations

import copy
import hashlib
import json
from importlib import resources
from typing import Any, Optional

import jsonschema
import numpy as np

from .control import (LinearBlock, SignalRange, build_lag, build_pi, delay_filter, passthrough_filter,
                      realize_toy_controller)
from .ensemble import AffineAgent, DiscreteAgent, Ensemble, LipschitzAgent, LipschitzMap, ProbabilityFunction
from .simulate import GRANULARITIES, InitialCondition, Scenario, Uniform
from .topology import KINDS, Topology

__all__ = [
    "SCHEMA",
    "ConfigError",
    "load_config",
    "validate_config",
    "build_scenario",
    "build_topology",
    "build_initial_conditions",
    "scenario_to_config",
    "config_hash",
    "builtin_config",
    "BUILTIN",
]

BUILTIN = ("toy1", "toy2")

_num = {"type": "number"}
_int = {"type": "integer"}
_vec = {"type": "array", "items": _num}
_mat = {"type": "array", "items": _vec}
_prov = {"type": "string"}


def _obj(props: dict, required=(), **extra) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False, **extra}


_prob = {
    "oneOf": [
        _obj({"family": {"const": "constant"}, "value": _num, "floor": _num, "provenance": _prov},
             ["family", "value"]),
        _obj({"family": {"const": "logistic"}, "midpoint": _num, "slope": _num, "floor": _num,
              "provenance": _prov}, ["family", "midpoint", "slope"]),
        _obj({"family": {"const": "piecewise_linear"}, "x": _vec, "y": _vec, "floor": _num,
              "provenance": _prov}, ["family", "x", "y"]),
    ]
}
_probs = {"type": "array", "items": _prob, "minItems": 1}
_map = _obj({"kind": {"enum": ["affine", "saturated_linear", "tanh"]}, "M": _mat, "v": _vec, "lo": _num,
             "hi": _num, "scale": _num, "lipschitz": _num}, ["kind", "M", "v"])

_agent = {
    "oneOf": [
        _obj({"kind": {"const": "affine"}, "A": _mat, "c": _vec, "b": _mat, "b_probs": _probs, "d": _vec,
              "d_probs": _probs, "x0": _vec, "provenance": _prov},
             ["kind", "A", "c", "b", "b_probs", "d", "d_probs"]),
        _obj({"kind": {"const": "lipschitz"}, "transition_maps": {"type": "array", "items": _map, "minItems": 1},
              "transition_probs": _probs, "output_maps": {"type": "array", "items": _map, "minItems": 1},
              "output_probs": _probs, "x0": _vec, "provenance": _prov},
             ["kind", "transition_maps", "transition_probs", "output_maps", "output_probs"]),
        _obj({"kind": {"const": "discrete"}, "n_states": {"type": "integer", "minimum": 1},
              "transition_maps": {"type": "array", "items": {"type": "array", "items": _int}, "minItems": 1},
              "transition_probs": _probs,
              "output_maps": {"type": "array", "items": _vec, "minItems": 1},
              "output_probs": _probs, "state": {"type": "integer", "minimum": 0}, "provenance": _prov},
             ["kind", "n_states", "transition_maps", "transition_probs", "output_maps", "output_probs"]),
    ]
}
_ensemble = {
    "oneOf": [
        _obj({"name": {"type": "string"}, "size": {"type": "integer", "minimum": 1}, "agent": _agent},
             ["size", "agent"]),
        _obj({"name": {"type": "string"}, "agents": {"type": "array", "items": _agent, "minItems": 1}},
             ["agents"]),
    ]
}
_period = {"type": "integer", "minimum": 1}
_block = {
    "oneOf": [
        _obj({"type": {"const": "toy"}, "alpha": _num, "beta": _num, "kappa": _num, "period": _period},
             ["type", "alpha", "beta", "kappa"]),
        _obj({"type": {"const": "pi"}, "Kp": _num, "Ki": _num, "period": _period}, ["type", "Kp", "Ki"]),
        _obj({"type": {"const": "lag"}, "Kp": _num, "Ki": _num, "rho": _num, "period": _period},
             ["type", "Kp", "Ki", "rho"]),
        _obj({"type": {"const": "delay"}}, ["type"]),
        _obj({"type": {"const": "passthrough"}}, ["type"]),
        _obj({"type": {"const": "state_space"}, "A": _mat, "B": _mat, "C": _mat, "D": _mat, "x0": _vec,
              "held_output": _vec, "period": _period, "name": {"type": "string"}},
             ["type", "A", "B", "C", "D"]),
    ]
}
_h_entry = {"oneOf": [_num, _mat]}
_ic = _obj({
    "name": {"type": "string"},
    "ensembles": {"type": "array", "items": {"oneOf": [
        {"type": "null"},
        _obj({"uniform": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
              "shared": {"type": "boolean"}, "provenance": _prov}, ["uniform"]),
        {"type": "array", "items": {"oneOf": [_num, _vec]}},
    ]}},
    "filters": {"type": "array", "items": {"oneOf": [{"type": "null"}, _vec]}},
    "controllers": {"type": "array", "items": {"oneOf": [{"type": "null"}, _vec]}},
    "pi": _vec,
})

SCHEMA = _obj({
    "name": {"type": "string"},
    "description": {"type": "string"},
    "provenance": {"type": "object", "additionalProperties": {"type": "string"}},
    "topology": _obj({
        "kind": {"enum": list(KINDS)},
        "ensembles": {"type": "array", "items": _ensemble, "minItems": 1},
        "controllers": {"type": "array", "items": _block, "minItems": 1},
        "filters": {"type": "array", "items": {"oneOf": [{"type": "null"}, _block]}},
        "H": {"type": "array", "items": {"type": "array", "items": _h_entry}},
        "u": {"type": "array", "items": {"oneOf": [_num, _vec]}},
        "references": _vec,
        "signal_ranges": {"type": "array", "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}},
        "pi0": _vec,
    }, ["kind", "ensembles", "controllers"]),
    "simulation": _obj({
        "horizon": {"type": "integer", "minimum": 1},
        "runs": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "granularity": {"enum": list(GRANULARITIES)},
        "initial_condition": _ic,
    }, ["horizon"]),
    "diagnostics": _obj({
        "burn_in": {"type": ["integer", "null"], "minimum": 0},
        "tolerance": {"type": "number", "exclusiveMinimum": 0},
        "runs_per_ic": {"type": "integer", "minimum": 1},
        "horizon": {"type": "integer", "minimum": 1},
        "coupling": {"enum": ["common", "independent"]},
        "initial_conditions": {"type": "array", "items": _ic},
        "oracle": _obj({"horizon": {"type": "integer", "minimum": 1},
                        "seeds": {"type": "array", "items": _int, "minItems": 1},
                        "tolerance": {"type": "number", "exclusiveMinimum": 0}}),
    }),
}, ["topology", "simulation"])


class ConfigError(ValueError):
    """Invalid scenario configuration; ``errors`` lists ``(json_pointer, message)`` pairs."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("invalid configuration:\n" + "\n".join(f"  {p or '/'}: {m}" for p, m in errors))


def _pointer(path) -> str:
    return "".join(f"/{str(p).replace('~', '~0').replace('/', '~1')}" for p in path)


def validate_config(cfg: dict) -> dict:
    """Schema-check ``cfg`` and build it once to surface semantic errors."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        out = []
        for e in errors:
            # oneOf failures are more useful reported through their closest branch
            best = jsonschema.exceptions.best_match([e]) if e.context else e
            out.append((_pointer(best.absolute_path), best.message))
        raise ConfigError(out)
    build_scenario(cfg)
    build_initial_conditions(cfg)
    return cfg


def load_config(path) -> dict:
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([("", f"not valid JSON: {exc}")]) from None
    return validate_config(cfg)


def builtin_config(name: str) -> dict:
    if name not in BUILTIN:
        raise ValueError(f"unknown built-in scenario {name!r}; choose from {BUILTIN}")
    text = resources.files("ergoloop").joinpath("scenarios", f"{name}.json").read_text()
    return json.loads(text)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


# ---------------------------------------------------------------------------
# Building
# ---------------------------------------------------------------------------


class _At:
    """Attach a JSON pointer to errors raised while building a component."""

    def __init__(self, path: str):
        self.path = path

    def __enter__(self):
        return self

    def __exit__(self, typ, exc, tb):
        if exc is not None and isinstance(exc, (ValueError, TypeError, IndexError, KeyError)) \
                and not isinstance(exc, ConfigError):
            raise ConfigError([(self.path, str(exc))]) from exc
        return False


def _prob_fn(d: dict) -> ProbabilityFunction:
    floor = d.get("floor", 0.0)
    if d["family"] == "constant":
        return ProbabilityFunction.constant(d["value"], floor)
    if d["family"] == "logistic":
        return ProbabilityFunction.logistic(d["midpoint"], d["slope"], floor)
    return ProbabilityFunction.piecewise_linear(d["x"], d["y"], floor)


def _lmap(d: dict) -> LipschitzMap:
    return LipschitzMap(d["kind"], d["M"], d["v"], d.get("lo", -np.inf), d.get("hi", np.inf),
                        d.get("scale", 1.0), d.get("lipschitz"))


def _agent(d: dict):
    if d["kind"] == "affine":
        return AffineAgent(d["A"], d["c"], d["b"], [_prob_fn(p) for p in d["b_probs"]], d["d"],
                           [_prob_fn(p) for p in d["d_probs"]], d.get("x0"))
    if d["kind"] == "lipschitz":
        return LipschitzAgent([_lmap(m) for m in d["transition_maps"]], [_prob_fn(p) for p in d["transition_probs"]],
                              [_lmap(m) for m in d["output_maps"]], [_prob_fn(p) for p in d["output_probs"]],
                              d.get("x0"))
    return DiscreteAgent(d["n_states"], d["transition_maps"], [_prob_fn(p) for p in d["transition_probs"]],
                         d["output_maps"], [_prob_fn(p) for p in d["output_probs"]], d.get("state", 0))


def _block(d: dict) -> LinearBlock:
    kind = d["type"]
    period = d.get("period", 1)
    if kind == "toy":
        return realize_toy_controller(d["alpha"], d["beta"], d["kappa"], period)
    if kind == "pi":
        return build_pi(d["Kp"], d["Ki"], period)
    if kind == "lag":
        return build_lag(d["Kp"], d["Ki"], d["rho"], period)
    if kind == "delay":
        return delay_filter()
    if kind == "passthrough":
        return passthrough_filter()
    A = np.array(d["A"], dtype=float).reshape(len(d["A"]), -1) if d["A"] else np.zeros((0, 0))
    n = A.shape[0]
    B = np.array(d["B"], dtype=float).reshape(n, -1) if n else np.zeros((0, len(d["D"][0])))
    C = np.array(d["C"], dtype=float).reshape(len(d["C"]), n)
    return LinearBlock(A, B, C, d["D"], d.get("x0"), period, d.get("held_output"), d.get("name", ""))


def build_topology(cfg: dict) -> Topology:
    tc = cfg["topology"]
    ensembles = []
    for m, e in enumerate(tc["ensembles"]):
        with _At(f"/topology/ensembles/{m}"):
            if "agents" in e:
                agents = []
                for i, a in enumerate(e["agents"]):
                    with _At(f"/topology/ensembles/{m}/agents/{i}"):
                        agents.append(_agent(a))
                ensembles.append(Ensemble(agents, e.get("name", "")))
            else:
                with _At(f"/topology/ensembles/{m}/agent"):
                    proto = _agent(e["agent"])
                ensembles.append(Ensemble.replicate(proto, e["size"], e.get("name", "")))
    controllers = []
    for p, c in enumerate(tc["controllers"]):
        with _At(f"/topology/controllers/{p}"):
            controllers.append(_block(c))
    filters = None
    if "filters" in tc:
        filters = []
        for q, f in enumerate(tc["filters"]):
            with _At(f"/topology/filters/{q}"):
                filters.append(None if f is None else _block(f))
    with _At("/topology"):
        return Topology(
            tc["kind"], ensembles, controllers, filters, tc.get("H"), tc.get("u", ()),
            tc.get("references"), [SignalRange(*r) for r in tc["signal_ranges"]] if "signal_ranges" in tc else None,
            tc.get("pi0"), cfg.get("name", ""),
        )


def _initial_condition(d: Optional[dict], path: str) -> InitialCondition:
    if d is None:
        return InitialCondition()
    with _At(path):
        ens = None
        if "ensembles" in d:
            ens = []
            for spec in d["ensembles"]:
                if isinstance(spec, dict):
                    ens.append(Uniform(spec["uniform"][0], spec["uniform"][1], spec.get("shared", False)))
                else:
                    ens.append(spec)
        return InitialCondition(ens, d.get("filters"), d.get("controllers"), d.get("pi"), d.get("name", ""))


def build_scenario(cfg: dict, overrides: Optional[dict] = None) -> Scenario:
    """Scenario from a (validated) config; ``overrides`` may set horizon/seed/granularity."""
    sim = dict(cfg["simulation"])
    sim.update({k: v for k, v in (overrides or {}).items() if v is not None and k in ("horizon", "seed", "granularity")})
    t = build_topology(cfg)
    ic = _initial_condition(sim.get("initial_condition"), "/simulation/initial_condition")
    with _At("/simulation"):
        sc = Scenario(t, sim["horizon"], ic, sim.get("seed", 0), sim.get("granularity", "aggregate_only"),
                      cfg.get("name", ""))
    # fail early on initial conditions that do not fit the topology
    _check_ic(sc, ic, "/simulation/initial_condition")
    return sc


def _check_ic(sc: Scenario, ic: InitialCondition, path: str) -> None:
    from .simulate import _apply_initial_condition
    from .streams import RunStreams
    from .topology import init_state

    t = sc.topology
    with _At(path):
        _apply_initial_condition(init_state(t, 1), t, ic, 0, 0, RunStreams(sc.seed, [0], [e.N for e in t.ensembles]))


def build_initial_conditions(cfg: dict) -> list[InitialCondition]:
    diag = cfg.get("diagnostics", {})
    ics = [_initial_condition(d, f"/diagnostics/initial_conditions/{j}")
           for j, d in enumerate(diag.get("initial_conditions", []))]
    if ics:
        sc = build_scenario(cfg)
        for j, ic in enumerate(ics):
            _check_ic(sc, ic, f"/diagnostics/initial_conditions/{j}")
    return ics


# ---------------------------------------------------------------------------
# Dumping
# ---------------------------------------------------------------------------


def _prob_dict(fn: ProbabilityFunction) -> dict:
    return fn.to_dict()


def _agent_dict(a) -> dict:
    if a.kind == "affine":
        return {"kind": "affine", "A": a.A.tolist(), "c": a.c.tolist(), "b": [b.tolist() for b in a.b_choices],
                "b_probs": [_prob_dict(f) for f in a.transition_probs], "d": list(a.d_choices),
                "d_probs": [_prob_dict(f) for f in a.output_probs], "x0": a.x.tolist()}
    if a.kind == "lipschitz":
        return {"kind": "lipschitz", "transition_maps": [w.to_dict() for w in a.transition_maps],
                "transition_probs": [_prob_dict(f) for f in a.transition_probs],
                "output_maps": [h.to_dict() for h in a.output_maps],
                "output_probs": [_prob_dict(f) for f in a.output_probs], "x0": a.x.tolist()}
    return {"kind": "discrete", "n_states": a.n_states, "transition_maps": [t.tolist() for t in a.transition_maps],
            "transition_probs": [_prob_dict(f) for f in a.transition_probs],
            "output_maps": [o.tolist() for o in a.output_maps],
            "output_probs": [_prob_dict(f) for f in a.output_probs], "state": a.state}


def _block_dict(b: LinearBlock) -> dict:
    return {"type": "state_space", "A": b.A.tolist(), "B": b.B.tolist(), "C": b.C.tolist(), "D": b.D.tolist(),
            "x0": b.x.tolist(), "held_output": b.held_output.tolist(), "period": b.update_period, "name": b.name}


def _ic_dict(ic: InitialCondition) -> dict:
    d: dict[str, Any] = {}
    if ic.name:
        d["name"] = ic.name
    if ic.ensembles is not None:
        d["ensembles"] = [
            None if s is None else
            {"uniform": [s.lo, s.hi], "shared": s.shared} if isinstance(s, Uniform) else
            [np.asarray(x, dtype=float).tolist() if np.ndim(x) else float(x) for x in s]
            for s in ic.ensembles
        ]
    for key in ("filters", "controllers"):
        v = getattr(ic, key)
        if v is not None:
            d[key] = [None if x is None else np.asarray(x, dtype=float).reshape(-1).tolist() for x in v]
    if ic.pi is not None:
        d["pi"] = [float(v) for v in ic.pi]
    return d


def scenario_to_config(sc: Scenario, runs: int = 1, diagnostics: Optional[dict] = None) -> dict:
    """Serialize a scenario; building the result gives a numerically identical scenario."""
    t = sc.topology
    ens = []
    for e in t.ensembles:
        dicts = [_agent_dict(a) for a in e.agents]
        if all(d == dicts[0] for d in dicts):
            ens.append({"name": e.name, "size": e.N, "agent": dicts[0]})
        else:
            ens.append({"name": e.name, "agents": dicts})
    topo: dict[str, Any] = {
        "kind": t.kind,
        "ensembles": ens,
        "controllers": [_block_dict(c) for c in t.controllers],
        "u": [v if np.ndim(v) == 0 else np.asarray(v).tolist() for v in t.u],
        "signal_ranges": [[r.lo, r.hi] for r in t.signal_ranges],
        "pi0": list(t.pi0),
    }
    if t.filters:
        topo["filters"] = [_block_dict(f) for f in t.filters]
    if t.kind == "multi_sided":
        topo["H"] = [[np.asarray(h, dtype=float).tolist() if np.ndim(h) else float(h) for h in row] for row in t.H]
    if t.references is not None:
        topo["references"] = list(t.references)
    cfg = {
        "name": sc.name,
        "topology": topo,
        "simulation": {"horizon": sc.horizon, "runs": runs, "seed": sc.seed, "granularity": sc.granularity,
                       "initial_condition": _ic_dict(sc.initial_condition)},
    }
    if diagnostics is not None:
        cfg["diagnostics"] = copy.deepcopy(diagnostics)
    return cfg
