"""Scenario execution, trajectory records and batch runs."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .streams import RunStreams
from .topology import SimulationError, Topology, init_state, step_topology

logger = logging.getLogger(__name__)

__all__ = [
    "Uniform",
    "InitialCondition",
    "Scenario",
    "TrajectoryRecord",
    "Summary",
    "BatchError",
    "run",
    "run_many",
    "run_batch",
    "summarize",
    "fingerprint",
    "GRANULARITIES",
    "MEMMAP_THRESHOLD",
]

GRANULARITIES = ("aggregate_only", "per_agent")
MEMMAP_THRESHOLD = 1_000_000
_BATCH_BYTES = 256 * 2**20


@dataclass(frozen=True)
class Uniform:
    """Sample initial states uniformly in ``[lo, hi]``.

    With ``shared=True`` one draw is made per population and run and copied
    to every agent (and every state coordinate); otherwise each agent
    coordinate is drawn independently. Discrete agents draw integer states
    in ``[lo, hi]`` intersected with their state set.
    """

    lo: float
    hi: float
    shared: bool = False

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or self.hi < self.lo:
            raise ValueError(f"uniform initial bounds need finite lo <= hi, got [{self.lo}, {self.hi}]")


@dataclass
class InitialCondition:
    """Initial states per component; ``None`` keeps the component's own value.

    ``ensembles[m]`` is a :class:`Uniform` or an explicit list of per-agent
    states. ``filters`` / ``controllers`` hold explicit state vectors,
    ``pi`` the initial held signal per controller.
    """

    ensembles: Optional[list] = None
    filters: Optional[list] = None
    controllers: Optional[list] = None
    pi: Optional[list] = None
    name: str = ""


@dataclass
class Scenario:
    topology: Topology
    horizon: int
    initial_condition: InitialCondition = field(default_factory=InitialCondition)
    seed: int = 0
    granularity: str = "aggregate_only"
    name: str = ""

    def __post_init__(self):
        if int(self.horizon) < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        self.horizon = int(self.horizon)
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"granularity must be one of {GRANULARITIES}")


@dataclass
class TrajectoryRecord:
    """One run: ``data[k]`` is the row of step ``k`` under ``columns``."""

    columns: list
    data: np.ndarray
    metadata: dict

    def __len__(self):
        return self.data.shape[0]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.data[:, self.columns.index(name)]
        except ValueError:
            raise KeyError(f"unknown signal {name!r}; available: {', '.join(self.columns)}") from None

    def to_csv(self, path) -> None:
        write_csv(path, self.columns, self.data)


@dataclass
class Summary:
    columns: list
    mean: np.ndarray
    std: np.ndarray
    n_runs: int

    def to_csv(self, path) -> None:
        cols = ["k"] + [f"{c}_{s}" for c in self.columns[1:] for s in ("mean", "std")]
        body = np.empty((self.mean.shape[0], len(cols)))
        body[:, 0] = self.mean[:, 0]
        body[:, 1::2] = self.mean[:, 1:]
        body[:, 2::2] = self.std[:, 1:]
        write_csv(path, cols, body)


class BatchError(RuntimeError):
    """Some runs of a batch failed; ``records`` holds ``None`` in their slots."""

    def __init__(self, records: list, failures: dict):
        lines = "; ".join(f"run {i}: {msg}" for i, msg in sorted(failures.items()))
        super().__init__(f"{len(failures)} of {len(records)} runs failed: {lines}")
        self.records = records
        self.failures = failures


def write_csv(path, columns: Sequence[str], data: np.ndarray) -> None:
    # k as an integer, everything else round-trip exact
    fmt = ["%d"] + ["%.17g"] * (len(columns) - 1)
    np.savetxt(path, data, fmt=fmt, delimiter=",", header=",".join(columns), comments="")


def columns_for(t: Topology, granularity: str) -> list[str]:
    P = len(t.controllers)
    E = t.H_block.shape[0]
    M = len(t.ensembles)
    S = t.H_block.shape[1] if t.filtered else 0
    cols = ["k"] + [f"pi_{p + 1}" for p in range(P)] + [f"e_{i + 1}" for i in range(E)]
    cols += [f"y_ens{m + 1}" for m in range(M)] + [f"yhat_{s + 1}" for s in range(S)]
    if granularity == "per_agent":
        cols += [f"y_ens{m + 1}_{i + 1}" for m, ens in enumerate(t.ensembles) for i in range(ens.N)]
    return cols


def fingerprint(scenario: Scenario) -> str:
    """Stable SHA-256 of every numeric parameter of a scenario."""
    h = hashlib.sha256()

    def feed(obj):
        if isinstance(obj, np.ndarray):
            h.update(str(obj.shape).encode())
            h.update(np.ascontiguousarray(obj, dtype=float).tobytes())
        elif isinstance(obj, (list, tuple)):
            h.update(b"[")
            for v in obj:
                feed(v)
            h.update(b"]")
        elif isinstance(obj, dict):
            for key in sorted(obj):
                h.update(str(key).encode())
                feed(obj[key])
        elif hasattr(obj, "__dataclass_fields__"):
            h.update(type(obj).__name__.encode())
            feed({k: getattr(obj, k) for k in obj.__dataclass_fields__ if not k.startswith("_")})
        else:
            h.update(json.dumps(obj, default=repr).encode())

    t = scenario.topology
    feed([t.kind, t.ensembles, t.controllers, t.filters, t.H_block, t.u, t.signal_ranges, t.pi0])
    feed([scenario.horizon, scenario.initial_condition, scenario.seed, scenario.granularity])
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


def _apply_initial_condition(state, t: Topology, ic: InitialCondition, r: int, run_index: int, streams) -> None:
    if ic.ensembles is not None:
        if len(ic.ensembles) != len(t.ensembles):
            raise ValueError("initial condition needs one entry per ensemble")
        for m, (spec, ens, ker) in enumerate(zip(ic.ensembles, t.ensembles, state.kernels)):
            if spec is None:
                continue
            if isinstance(spec, Uniform):
                xs = _sample_uniform(spec, ens, streams.init(run_index, m))
            else:
                xs = list(spec)
                if len(xs) != ens.N:
                    raise ValueError(f"ensemble[{m}]: {len(xs)} initial states for {ens.N} agents")
            ker.set_states(xs, run=r)
    for blocks, xs_list, name in ((t.filters, state.fx, "filter"), (t.controllers, state.cx, "controller")):
        given = ic.filters if name == "filter" else ic.controllers
        if given is None:
            continue
        if len(given) != len(blocks):
            raise ValueError(f"initial condition needs one {name} state per {name}")
        for b, (blk, x0) in enumerate(zip(blocks, given)):
            if x0 is not None:
                xs_list[b][r] = np.asarray(x0, dtype=float).reshape(blk.n)
    if ic.pi is not None:
        if len(ic.pi) != len(t.controllers):
            raise ValueError("initial condition needs one signal per controller")
        state.pi[r] = [t.signal_ranges[p].clamp(float(v)) for p, v in enumerate(ic.pi)]


def _sample_uniform(spec: Uniform, ens, rng: np.random.Generator) -> list:
    if ens.kind == "discrete":
        out = []
        shared = None
        for a in ens.agents:
            lo = max(int(np.ceil(spec.lo)), 0)
            hi = min(int(np.floor(spec.hi)), a.n_states - 1)
            if hi < lo:
                raise ValueError("uniform initial bounds contain no state of the agent")
            if spec.shared:
                shared = int(rng.integers(lo, hi + 1)) if shared is None else shared
                out.append(min(max(shared, lo), hi))
            else:
                out.append(int(rng.integers(lo, hi + 1)))
        return out
    if spec.shared:
        v = rng.uniform(spec.lo, spec.hi)
        return [np.full(a.n, v) for a in ens.agents]
    return [rng.uniform(spec.lo, spec.hi, size=a.n) for a in ens.agents]


def run_many(scenario: Scenario, run_indices: Sequence[int],
             initial_conditions: Optional[Sequence[InitialCondition]] = None,
             horizon: Optional[int] = None,
             init_indices: Optional[Sequence[int]] = None) -> list[TrajectoryRecord]:
    """Run several indices in lockstep; each record equals ``run(scenario, i)``.

    ``initial_conditions`` optionally gives one initial condition per run
    (default: the scenario's). ``init_indices`` overrides the run index used
    to key random initial-state draws, which lets several runs share noise
    streams while starting from different sampled states.
    """
    t = scenario.topology
    runs = [int(i) for i in run_indices]
    R = len(runs)
    K = scenario.horizon if horizon is None else int(horizon)
    ics = list(initial_conditions) if initial_conditions is not None else [scenario.initial_condition] * R
    if len(ics) != R:
        raise ValueError("need one initial condition per run")
    cols = columns_for(t, scenario.granularity)
    C = len(cols)
    streams = RunStreams(scenario.seed, runs, [e.N for e in t.ensembles])
    state = init_state(t, R)
    init_keys = runs if init_indices is None else [int(i) for i in init_indices]
    if len(init_keys) != R:
        raise ValueError("need one init index per run")
    for r, (idx, ic) in enumerate(zip(init_keys, ics)):
        _apply_initial_condition(state, t, ic, r, idx, streams)

    if K > MEMMAP_THRESHOLD:
        tmp = tempfile.mkdtemp(prefix="ergoloop-")
        datas = [np.lib.format.open_memmap(os.path.join(tmp, f"run_{i}.npy"), mode="w+", shape=(K, C))
                 for i in runs]
        block = None
    else:
        block = np.empty((R, K, C))
        datas = [block[r] for r in range(R)]

    P = len(t.controllers)
    E = t.H_block.shape[0]
    M = len(t.ensembles)
    S = len(cols) - 1 - P - E - M
    if scenario.granularity == "per_agent":
        S -= sum(e.N for e in t.ensembles)
    o_pi, o_e, o_y, o_yh = 1, 1 + P, 1 + P + E, 1 + P + E + M
    o_ag = o_yh + S
    row = np.empty((R, C))
    start = time.perf_counter()
    for k in range(K):
        sig, state = step_topology(t, state, k, streams)
        row[:, 0] = k
        row[:, o_pi:o_e] = sig.pi
        row[:, o_e:o_y] = sig.e
        row[:, o_y:o_yh] = sig.y
        row[:, o_yh:o_ag] = sig.yhat
        if scenario.granularity == "per_agent":
            row[:, o_ag:] = np.concatenate(sig.y_agents, axis=1)
        if block is not None:
            block[:, k] = row
        else:
            for r in range(R):
                datas[r][k] = row[r]
    wall = time.perf_counter() - start
    digest = fingerprint(scenario)
    records = []
    for r, idx in enumerate(runs):
        meta = {
            "seed": scenario.seed,
            "run_index": idx,
            "scenario_hash": digest,
            "wall_time": wall / R,
            "clamp_events": state.clamp_events[r].tolist(),
            "initial_condition": ics[r].name,
        }
        records.append(TrajectoryRecord(cols, datas[r], meta))
    return records


def run(scenario: Scenario, run_index: int = 0) -> TrajectoryRecord:
    """Execute ``scenario.horizon`` steps of run ``run_index``."""
    return run_many(scenario, [run_index])[0]


def _chunk_size(scenario: Scenario) -> int:
    row_bytes = 8 * scenario.horizon * len(columns_for(scenario.topology, scenario.granularity))
    return max(1, min(64, _BATCH_BYTES // max(row_bytes, 1)))


def _run_chunk(scenario: Scenario, indices: list[int]):
    """Lockstep chunk; on failure, retry one run at a time to isolate it."""
    try:
        return run_many(scenario, indices), {}
    except SimulationError:
        if len(indices) == 1:
            raise
    records, failures = [], {}
    for i in indices:
        try:
            records.append(run_many(scenario, [i])[0])
        except SimulationError as exc:
            records.append(None)
            failures[i] = f"{exc} (component {exc.component}, step {exc.step})"
    return records, failures


def _run_chunk_safe(scenario, indices):
    try:
        return _run_chunk(scenario, indices)
    except SimulationError as exc:
        return [None], {indices[0]: f"{exc} (component {exc.component}, step {exc.step})"}


def run_batch(scenario: Scenario, n_runs: int, workers: int = 1) -> list[TrajectoryRecord]:
    """Runs ``0 .. n_runs - 1``; element ``i`` equals ``run(scenario, i)``.

    Runs are split into contiguous chunks that advance in lockstep; with
    ``workers > 1`` chunks go to a process pool. A failed run does not stop
    the others: every run is attempted and failures are raised together as
    :class:`BatchError`.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    workers = max(1, int(workers))
    size = _chunk_size(scenario)
    if workers > 1:
        size = min(size, -(-n_runs // workers))
    chunks = [list(range(s, min(s + size, n_runs))) for s in range(0, n_runs, size)]
    if workers == 1 or len(chunks) == 1:
        results = [_run_chunk_safe(scenario, c) for c in chunks]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(chunks))) as pool:
            results = list(pool.map(_run_chunk_safe, [scenario] * len(chunks), chunks))
    records, failures = [], {}
    for recs, fails in results:
        records.extend(recs)
        failures.update(fails)
    if failures:
        for i, msg in failures.items():
            logger.error("run %d failed: %s", i, msg)
        raise BatchError(records, failures)
    return records


def summarize(records: Sequence[TrajectoryRecord]) -> Summary:
    """Per-step mean and sample standard deviation (``n - 1``) of every column."""
    if not records:
        raise ValueError("summarize needs at least one record")
    cols = records[0].columns
    K = len(records[0])
    for rec in records:
        if len(rec) != K or rec.columns != cols:
            raise ValueError("records must share horizon and columns")
    stack = np.stack([np.asarray(rec.data) for rec in records])
    mean = stack.mean(axis=0)
    std = stack.std(axis=0, ddof=1) if len(records) > 1 else np.zeros_like(mean)
    return Summary(list(cols), mean, std, len(records))
