"""``ergoloop`` command line: simulate, certify, diagnose, reproduce."""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import platform
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .certify import certify, explain
from .config import (ConfigError, build_initial_conditions, build_scenario, builtin_config, config_hash,
                     validate_config, BUILTIN)
from .diagnostics import oracle_compare, unique_ergodicity_test
from .simulate import GRANULARITIES, BatchError, run_batch, summarize

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_CONFIG):
        super().__init__(message)
        self.code = code


def _workers(arg: Optional[int]) -> int:
    if arg is not None:
        return arg
    env = os.environ.get("ERGOLOOP_WORKERS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise CliError(f"ERGOLOOP_WORKERS must be a positive integer, got {env!r}") from None
        if n < 1:
            raise CliError(f"ERGOLOOP_WORKERS must be a positive integer, got {env!r}")
        return n
    return 1


def _effective_config(cfg: dict, args) -> tuple[dict, dict]:
    """Apply CLI overrides to a copy of ``cfg``; returns (config, overrides)."""
    cfg = copy.deepcopy(cfg)
    overrides = {k: getattr(args, k, None) for k in ("seed", "runs", "horizon", "granularity")}
    overrides = {k: v for k, v in overrides.items() if v is not None}
    sim = cfg["simulation"]
    sim.update(overrides)
    if "horizon" in overrides and "diagnostics" in cfg:
        cfg["diagnostics"]["horizon"] = overrides["horizon"]
    return cfg, overrides


def _load(args) -> tuple[dict, dict]:
    if getattr(args, "name", None):
        raw = builtin_config(args.name)
    else:
        if not Path(args.config).is_file():
            raise CliError(f"config file not found: {args.config}")
        with open(args.config) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise CliError(f"{args.config}: not valid JSON: {exc}") from None
    cfg, overrides = _effective_config(raw, args)
    try:
        validate_config(cfg)
    except ConfigError as exc:
        raise CliError(str(exc)) from None
    return cfg, overrides


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _manifest(out: Path, command: str, cfg: dict, overrides: dict, workers: int, extra: Optional[dict] = None):
    sim = cfg["simulation"]
    artifacts = sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    manifest = {
        "tool": "ergoloop",
        "version": __version__,
        "command": command,
        "config_hash": config_hash(cfg),
        "config": cfg,
        "overrides": overrides,
        "seed": sim.get("seed", 0),
        "run_indices": list(range(sim.get("runs", 1))),
        "workers": workers,
        "artifacts": {str(p.relative_to(out)): _sha256(p) for p in artifacts},
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    manifest.update(extra or {})
    _dump_json(out / "manifest.json", manifest)
    return manifest


def _simulate(cfg: dict, out: Path, workers: int) -> dict:
    sc = build_scenario(cfg)
    n = cfg["simulation"].get("runs", 1)
    failures = {}
    try:
        records = run_batch(sc, n, workers=workers)
    except BatchError as exc:
        records = [r for r in exc.records if r is not None]
        failures = exc.failures
    tdir = out / "trajectories"
    tdir.mkdir(parents=True, exist_ok=True)
    for rec in records:
        rec.to_csv(tdir / f"run_{rec.metadata['run_index']}.csv")
    if records:
        summarize(records).to_csv(out / "summary.csv")
    clamps = {str(r.metadata["run_index"]): r.metadata["clamp_events"] for r in records}
    return {"failures": {str(k): v for k, v in failures.items()}, "clamp_events": clamps}


def _certify(cfg: dict, out: Path):
    report = certify(build_scenario(cfg).topology)
    _dump_json(out / "certification_report.json", report.to_dict())
    return report


def _diagnose(cfg: dict, out: Path, require_ics: bool = True):
    sc = build_scenario(cfg)
    ics = build_initial_conditions(cfg)
    if len(ics) < 2:
        raise CliError("diagnose needs at least 2 initial conditions under diagnostics.initial_conditions")
    d = cfg.get("diagnostics", {})
    report = unique_ergodicity_test(sc, ics, runs_per_ic=d.get("runs_per_ic", 5), tolerance=d.get("tolerance", 0.02),
                                    burn_in=d.get("burn_in"), coupling=d.get("coupling", "common"),
                                    horizon=d.get("horizon"))
    body = report.to_dict()
    if all(e.kind == "discrete" for e in sc.topology.ensembles):
        o = d.get("oracle", {})
        try:
            oracle = oracle_compare(sc, horizon=o.get("horizon", 100_000), seeds=o.get("seeds", (0, 1, 2, 3, 4)),
                                    tolerance=o.get("tolerance", 0.01))
        except ValueError as exc:
            body["oracle"] = {"skipped": str(exc)}
        else:
            body["oracle"] = {"passed": all(r.passed for r in oracle), "agents": [r.to_dict() for r in oracle]}
    _dump_json(out / "ergodicity_report.json", body)
    return body


def _prepare_out(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg, overrides = _load(args)
    workers = _workers(args.workers)
    out = _prepare_out(args.out)
    info = _simulate(cfg, out, workers)
    _manifest(out, "simulate", cfg, overrides, workers, info)
    if info["failures"]:
        for idx, msg in info["failures"].items():
            print(f"run {idx} failed: {msg}", file=sys.stderr)
        return EXIT_FAIL
    print(f"wrote {cfg['simulation'].get('runs', 1)} trajectories and summary.csv to {out}")
    return EXIT_OK


def cmd_certify(args) -> int:
    cfg, overrides = _load(args)
    out = _prepare_out(args.out)
    report = _certify(cfg, out)
    _manifest(out, "certify", cfg, overrides, 1, {"verdict": report.verdict})
    print(explain(report))
    return EXIT_OK if report.verdict == "certified_unique" else EXIT_FAIL


def cmd_diagnose(args) -> int:
    cfg, overrides = _load(args)
    if len(cfg.get("diagnostics", {}).get("initial_conditions", [])) < 2:
        raise CliError("diagnose needs at least 2 initial conditions under diagnostics.initial_conditions")
    out = _prepare_out(args.out)
    body = _diagnose(cfg, out)
    _manifest(out, "diagnose", cfg, overrides, 1, {"verdict": body["verdict"]})
    print(f"verdict: {body['verdict']} (max discrepancy {body['max_discrepancy']:.4g})")
    for r in body["reasons"]:
        print(f"  {r}")
    if "oracle" in body:
        o = body["oracle"]
        print(f"oracle: {'skipped: ' + o['skipped'] if 'skipped' in o else ('pass' if o['passed'] else 'fail')}")
    return EXIT_OK if body["verdict"] != "inconclusive" else EXIT_FAIL


def cmd_reproduce(args) -> int:
    cfg, overrides = _load(args)
    workers = _workers(args.workers)
    out = _prepare_out(args.out)
    info = _simulate(cfg, out, workers)
    report = _certify(cfg, out)
    info["verdict"] = report.verdict
    if not info["failures"]:
        info["ergodicity_verdict"] = _diagnose(cfg, out)["verdict"]
    _manifest(out, f"reproduce {args.name}", cfg, overrides, workers, info)
    print(f"{args.name}: certification {report.verdict}; "
          f"ergodicity {info.get('ergodicity_verdict', 'not run')}; artifacts in {out}")
    if info["failures"]:
        for idx, msg in info["failures"].items():
            print(f"run {idx} failed: {msg}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _positive(v: str) -> int:
    n = int(v)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return n


def _nonneg(v: str) -> int:
    n = int(v)
    if n < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {v}")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ergoloop", description=__doc__)
    parser.add_argument("--version", action="version", version=f"ergoloop {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True, sim=True):
        if config:
            p.add_argument("--config", required=True, help="scenario configuration (JSON)")
        p.add_argument("--out", default="ergoloop_out", help="output directory (default: ergoloop_out)")
        p.add_argument("--seed", type=_nonneg, help="override the base seed")
        p.add_argument("--horizon", type=_positive, help="override the number of steps")
        if sim:
            p.add_argument("--runs", type=_positive, help="override the number of runs")
            p.add_argument("--workers", type=_positive, help="worker processes (default: $ERGOLOOP_WORKERS or 1)")
            p.add_argument("--granularity", choices=GRANULARITIES, help="record only aggregates or every agent")

    p = sub.add_parser("simulate", help="run a batch and write trajectories and summary")
    common(p)
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("certify", help="check the sufficient conditions for unique ergodicity")
    common(p, sim=False)
    p.set_defaults(func=cmd_certify)
    p = sub.add_parser("diagnose", help="compare long-run averages across initial conditions")
    common(p, sim=False)
    p.set_defaults(func=cmd_diagnose)
    p = sub.add_parser("reproduce", help="run a built-in scenario end to end")
    p.add_argument("name", choices=BUILTIN)
    common(p, config=False)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
