"""Closed-loop wiring of ensembles, filters and controllers.

Every supported kind reduces to one interconnection rule,
``e = u - H z``, where ``z`` stacks the filtered ensemble outputs (two- and
multi-sided markets) or the raw aggregate outputs (the two toy loops), and
``H`` is a block matrix:

=============  =====================  ===========================
kind           sources ``z``          ``H``
=============  =====================  ===========================
two_sided      ``yhat1, yhat2``       ``[[0, 1], [-1, 0]]``
multi_sided    ``yhat1 .. yhatM``     user supplied
toy1           ``y1, y2``             ``[[1, 1], [1, 1]]``
toy2           ``y1, y2``             ``[[1, -1]]``
=============  =====================  ===========================
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .control import LinearBlock, SignalRange, batch_step, delay_filter
from .ensemble import Ensemble
from .spectral import DimensionError

logger = logging.getLogger(__name__)

__all__ = [
    "KINDS",
    "AssemblyError",
    "SimulationError",
    "Topology",
    "AugmentedSystem",
    "StepSignals",
    "TopologyState",
    "wire_error_signals",
    "assemble_augmented_matrix",
    "init_state",
    "step_topology",
    "DEFAULT_RANGE",
    "MAX_OFFSET_COMBINATIONS",
]

KINDS = ("two_sided", "multi_sided", "toy1", "toy2")
DEFAULT_RANGE = SignalRange(-1e9, 1e9)
MAX_OFFSET_COMBINATIONS = 1 << 16

_FIXED_H = {
    "two_sided": [[0.0, 1.0], [-1.0, 0.0]],
    "toy1": [[1.0, 1.0], [1.0, 1.0]],
    "toy2": [[1.0, -1.0]],
}
# (ensembles, controllers, filters); None = M for multi_sided
_COUNTS = {"two_sided": (2, 2, 2), "toy1": (2, 2, 0), "toy2": (2, 1, 0)}


class AssemblyError(DimensionError):
    """Raised when component blocks cannot be wired together."""


class SimulationError(RuntimeError):
    """Raised when a signal becomes NaN or infinite during a run."""

    def __init__(self, message: str, step: int, component: str):
        super().__init__(message)
        self.step = step
        self.component = component


@dataclass(eq=False)
class Topology:
    """A closed loop of ensembles, optional filters and controllers.

    ``u`` holds one external input per controller: a constant or a bounded
    time series (held at its last value past the end). ``references`` are
    optional per-ensemble upper bounds used for feasibility monitoring.
    """

    kind: str
    ensembles: list
    controllers: list
    filters: Optional[list] = None
    H: Optional[object] = None
    u: Sequence = ()
    references: Optional[list] = None
    signal_ranges: Optional[list] = None
    pi0: Optional[list] = None
    name: str = ""
    _wiring: "_Wiring" = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown topology kind {self.kind!r}; expected one of {KINDS}")
        self.ensembles = list(self.ensembles)
        self.controllers = list(self.controllers)
        M = len(self.ensembles)
        if self.kind == "multi_sided":
            want = (M, M, M)
            if M < 1:
                raise ValueError("multi_sided needs at least one ensemble")
        else:
            want = _COUNTS[self.kind]
        if self.filters is None:
            self.filters = [delay_filter() for _ in range(want[2])]
        self.filters = [delay_filter() if f is None else f for f in self.filters]
        got = (M, len(self.controllers), len(self.filters))
        if got != want:
            raise ValueError(f"{self.kind} needs (ensembles, controllers, filters) = {want}, got {got}")
        for e in self.ensembles:
            if not isinstance(e, Ensemble):
                raise TypeError("ensembles must be Ensemble instances")
        for b in self.controllers + self.filters:
            if not isinstance(b, LinearBlock):
                raise TypeError("controllers and filters must be LinearBlock instances")
        if self.kind == "multi_sided":
            if self.H is None:
                raise ValueError("multi_sided needs an interconnection matrix H")
        elif self.H is not None:
            raise ValueError(f"{self.kind} has a fixed interconnection; H must be omitted")
        P = len(self.controllers)
        u = list(self.u) if self.u is not None else []
        if not u:
            u = [0.0] * P
        if len(u) != P:
            raise ValueError(f"need one external input per controller ({P}), got {len(u)}")
        self.u = [float(v) if np.ndim(v) == 0 else np.asarray(v, dtype=float) for v in u]
        for v in self.u:
            if not np.all(np.isfinite(v)):
                raise ValueError("external inputs must be finite")
        self.signal_ranges = list(self.signal_ranges) if self.signal_ranges else [DEFAULT_RANGE] * P
        if len(self.signal_ranges) != P:
            raise ValueError("need one signal range per controller")
        self.signal_ranges = [r if isinstance(r, SignalRange) else SignalRange(*r) for r in self.signal_ranges]
        self.pi0 = [0.0] * P if self.pi0 is None else [float(v) for v in self.pi0]
        if len(self.pi0) != P:
            raise ValueError("need one initial signal per controller")
        if self.references is not None and len(self.references) != M:
            raise ValueError("need one reference bound per ensemble")
        self._wiring = _Wiring(self)

    @property
    def filtered(self) -> bool:
        return self.kind in ("two_sided", "multi_sided")

    @property
    def drivers(self) -> list[int]:
        """Index of the controller whose signal each ensemble responds to."""
        return self._wiring.driver

    @property
    def H_block(self) -> np.ndarray:
        return self._wiring.H

    def signal_range_for(self, m: int) -> SignalRange:
        return self.signal_ranges[self.drivers[m]]

    def u_at(self, k: int) -> np.ndarray:
        return self._wiring.u_at(k)

    def component_names(self) -> list[str]:
        names = [f"ensemble[{m}]" for m in range(len(self.ensembles))]
        names += [f"filter[{q}]" for q in range(len(self.filters))]
        names += [f"controller[{p}]" for p in range(len(self.controllers))]
        return names

    def copy(self) -> "Topology":
        return Topology(
            self.kind, [e.copy() for e in self.ensembles], [c.copy() for c in self.controllers],
            [f.copy() for f in self.filters], self.H, list(self.u),
            None if self.references is None else list(self.references),
            list(self.signal_ranges), list(self.pi0), self.name,
        )


class _Wiring:
    """Block coupling matrix, signal slices and the ensemble-to-controller map."""

    def __init__(self, t: Topology):
        M, P = len(t.ensembles), len(t.controllers)
        for p, c in enumerate(t.controllers):
            if c.p != 1:
                raise AssemblyError(f"controller[{p}] must emit a scalar signal, has output dimension {c.p}")
        if t.filtered:
            for q, f in enumerate(t.filters):
                if f.m != 1:
                    raise AssemblyError(
                        f"filter[{q}] must take the scalar aggregate of ensemble[{q}], has input dimension {f.m}"
                    )
            src_dims = [f.p for f in t.filters]
        else:
            src_dims = [1] * M
        in_dims = [c.m for c in t.controllers]
        H = _FIXED_H.get(t.kind, t.H)
        H = list(H) if not isinstance(H, np.ndarray) else H
        if len(H) != P or any(len(row) != len(src_dims) for row in H):
            raise AssemblyError(f"H must have {P} x {len(src_dims)} blocks")
        rows = []
        for p in range(P):
            blocks = []
            for q in range(len(src_dims)):
                h = np.asarray(H[p][q], dtype=float)
                if h.ndim == 0:
                    h = np.full((in_dims[p], src_dims[q]), float(h))
                if h.shape != (in_dims[p], src_dims[q]):
                    raise AssemblyError(
                        f"H[{p}][{q}] has shape {h.shape}; controller[{p}] input and "
                        f"source[{q}] output need {(in_dims[p], src_dims[q])}"
                    )
                blocks.append(h)
            rows.append(blocks)
        self.H = np.block(rows) if P else np.zeros((0, sum(src_dims)))
        self.src_dims = src_dims
        self.in_dims = in_dims
        self.in_slices = _slices(in_dims)
        self.src_slices = _slices(src_dims)
        self.driver = [0] * M if t.kind == "toy2" else list(range(M))
        self._u = t.u
        self._series = any(np.ndim(v) > 0 for v in t.u)
        self._u_const = np.concatenate([np.full(d, v) for v, d in zip(t.u, in_dims)]) if not self._series else None

    def u_at(self, k: int) -> np.ndarray:
        if not self._series:
            return self._u_const
        vals = [v if np.ndim(v) == 0 else v[min(k, len(v) - 1)] for v in self._u]
        return np.concatenate([np.full(d, v) for v, d in zip(vals, self.in_dims)])


def _slices(dims: Sequence[int]) -> list[slice]:
    out, start = [], 0
    for d in dims:
        out.append(slice(start, start + d))
        start += d
    return out


def wire_error_signals(t: Topology, filtered_outputs, k: int = 0) -> np.ndarray:
    """Controller inputs ``e = u(k) - H z`` for the stacked source signals ``z``.

    For the toy kinds ``z`` is the vector of raw aggregate outputs.
    """
    z = np.asarray(filtered_outputs, dtype=float).reshape(-1)
    w = t._wiring
    if z.shape[0] != w.H.shape[1]:
        raise DimensionError(f"{t.kind}: expected {w.H.shape[1]} source signals, got {z.shape[0]}")
    return w.u_at(k) - w.H @ z


# ---------------------------------------------------------------------------
# Augmented matrix
# ---------------------------------------------------------------------------


@dataclass
class AugmentedSystem:
    """The matrix of ``xi(k+1) = A xi(k) + beta_l`` and its offset library.

    ``offsets`` / ``offset_probs`` enumerate every ``beta_l`` with the
    probability of its branch combination at signals ``pi``; they are empty
    (``enumerated = False``) when the combinations exceed
    :data:`MAX_OFFSET_COMBINATIONS`.
    """

    A: np.ndarray
    block_index: dict
    offsets: np.ndarray
    offset_probs: np.ndarray
    enumerated: bool
    pi: np.ndarray

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def diagonal_blocks(self) -> dict:
        return {name: self.A[s, s] for name, s in self.block_index.items()}


def assemble_augmented_matrix(t: Topology, pi: Optional[Sequence[float]] = None) -> AugmentedSystem:
    """Assemble the block lower-triangular state matrix of an affine loop.

    State order: every agent of every ensemble, then the filters, then the
    controllers.
    """
    for m, ens in enumerate(t.ensembles):
        if ens.kind != "affine":
            raise TypeError(f"ensemble[{m}] holds {ens.kind} agents; the augmented matrix needs affine agents")
    w = t._wiring
    names, dims = [], []
    for m, ens in enumerate(t.ensembles):
        for i, a in enumerate(ens.agents):
            names.append(f"ensemble[{m}].agent[{i}]")
            dims.append(a.n)
    for q, f in enumerate(t.filters):
        names.append(f"filter[{q}]")
        dims.append(f.n)
    for p, c in enumerate(t.controllers):
        names.append(f"controller[{p}]")
        dims.append(c.n)
    sl = dict(zip(names, _slices(dims)))
    n = sum(dims)
    A = np.zeros((n, n))

    ens_cols, chat = [], []
    for m, ens in enumerate(t.ensembles):
        first = sl[f"ensemble[{m}].agent[0]"].start
        last = sl[f"ensemble[{m}].agent[{ens.N - 1}]"].stop
        ens_cols.append(slice(first, last))
        chat.append(np.concatenate([a.c for a in ens.agents])[None, :])  # 1^T C_hat
        for i, a in enumerate(ens.agents):
            s = sl[f"ensemble[{m}].agent[{i}]"]
            A[s, s] = a.A

    # z = Z xi + offset: sources as linear functions of the augmented state
    Z = np.zeros((w.H.shape[1], n))
    for q, zs in enumerate(w.src_slices):
        if t.filtered:
            f = t.filters[q]
            fs = sl[f"filter[{q}]"]
            Z[zs, fs] = f.C
            Z[zs, ens_cols[q]] = f.D @ chat[q]
            A[fs, fs] = f.A
            A[fs, ens_cols[q]] = f.B @ chat[q]
        else:
            Z[zs, ens_cols[q]] = chat[q]
    for p, c in enumerate(t.controllers):
        cs = sl[f"controller[{p}]"]
        A[cs, :] -= c.B @ w.H[w.in_slices[p]] @ Z
        A[cs, cs] += c.A

    pis = np.array([t.signal_ranges[p].clamp(v) for p, v in enumerate(t.pi0 if pi is None else pi)])
    offsets, probs, enumerated = _offset_library(t, sl, n, pis)
    return AugmentedSystem(A, sl, offsets, probs, enumerated, pis)


def _offset_library(t: Topology, sl: dict, n: int, pis: np.ndarray):
    agents = [(m, i, a) for m, ens in enumerate(t.ensembles) for i, a in enumerate(ens.agents)]
    count = 1
    for _, _, a in agents:
        count *= len(a.b_choices) * len(a.d_choices)
        if count > MAX_OFFSET_COMBINATIONS:
            return np.zeros((0, n)), np.zeros(0), False
    w = t._wiring
    u0 = w.u_at(0)
    choice_lists, prob_lists = [], []
    for m, i, a in agents:
        pi = pis[w.driver[m]]
        pb, pd = a.transition_branches(pi), a.output_branches(pi)
        choice_lists.append([(j, l) for j in range(len(a.b_choices)) for l in range(len(a.d_choices))])
        prob_lists.append({(j, l): pb[j] * pd[l] for j in range(len(pb)) for l in range(len(pd))})
    offsets, probs = [], []
    for combo in itertools.product(*choice_lists):
        beta = np.zeros(n)
        dsum = np.zeros(len(t.ensembles))
        prob = 1.0
        for (m, i, a), (j, l), pl in zip(agents, combo, prob_lists):
            beta[sl[f"ensemble[{m}].agent[{i}]"]] = a.b_choices[j]
            dsum[m] += a.d_choices[l]
            prob *= pl[(j, l)]
        zoff = np.zeros(w.H.shape[1])
        for q, zs in enumerate(w.src_slices):
            if t.filtered:
                f = t.filters[q]
                zoff[zs] = f.D[:, 0] * dsum[q]
                beta[sl[f"filter[{q}]"]] = f.B[:, 0] * dsum[q]
            else:
                zoff[zs] = dsum[q]
        e_off = u0 - w.H @ zoff
        for p, c in enumerate(t.controllers):
            beta[sl[f"controller[{p}]"]] = c.B @ e_off[w.in_slices[p]]
        offsets.append(beta)
        probs.append(prob)
    return np.array(offsets), np.array(probs), True


# ---------------------------------------------------------------------------
# Stepping
# ---------------------------------------------------------------------------


class StepSignals(NamedTuple):
    """Signals of one step for ``R`` lockstep runs (leading axis = run)."""

    y_agents: list
    y: np.ndarray
    yhat: np.ndarray
    e: np.ndarray
    pi: np.ndarray


class TopologyState:
    """Mutable state of ``runs`` lockstep copies of a topology.

    Block states and held outputs are kept as ``(runs, dim)`` arrays; the
    topology's own blocks are only read for their matrices and initial
    values.
    """

    def __init__(self, t: Topology, runs: int = 1):
        R = self.runs = int(runs)
        self.topology = t
        self.kernels = [e.kernel(R) for e in t.ensembles]
        self.fx = [np.repeat(f.x[None], R, axis=0) for f in t.filters]
        self.fh = [np.repeat(f.held_output[None], R, axis=0) for f in t.filters]
        self.cx = [np.repeat(c.x[None], R, axis=0) for c in t.controllers]
        self.ch = [np.repeat(c.held_output[None], R, axis=0) for c in t.controllers]
        pi0 = [t.signal_ranges[p].clamp(v) for p, v in enumerate(t.pi0)]
        self.pi = np.repeat(np.array(pi0, dtype=float)[None], R, axis=0)
        self.clamp_events = np.zeros((R, len(t.controllers)), dtype=np.int64)

    def xi(self, run: int = 0) -> np.ndarray:
        """Augmented state of one run, in the block order of :func:`assemble_augmented_matrix`."""
        parts = []
        for ker in self.kernels:
            parts.extend(np.atleast_1d(np.asarray(x, dtype=float)) for x in ker.states(run))
        parts.extend(x[run] for x in self.fx)
        parts.extend(x[run] for x in self.cx)
        return np.concatenate(parts)


def init_state(t: Topology, runs: int = 1) -> TopologyState:
    return TopologyState(t, runs)


def step_topology(t: Topology, state: TopologyState, k: int, streams) -> tuple[StepSignals, TopologyState]:
    """One global tick in a fixed order.

    1. sample every agent output with the currently held signals;
    2. aggregate per ensemble;
    3. step the filters on the aggregates;
    4. form the controller inputs ``e = u - H z``;
    5. step the controllers, clamping each new signal to its range;
    6. sample every agent transition with the new signals.

    ``streams`` supplies one row of uniforms per run and ensemble.
    Overflow is not warned about; it surfaces as a :class:`SimulationError`.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        return _step(t, state, k, streams)


def _step(t: Topology, state: TopologyState, k: int, streams) -> tuple[StepSignals, TopologyState]:
    w = t._wiring
    drivers = w.driver
    held = state.pi
    y_agents = [ker.output(held[:, drivers[m]], streams.output[m].row(k)) for m, ker in enumerate(state.kernels)]
    y = np.stack([ya.sum(axis=1) for ya in y_agents], axis=1)
    if t.filtered:
        for q, f in enumerate(t.filters):
            state.fx[q], state.fh[q] = batch_step(f, state.fx[q], state.fh[q], y[:, q:q + 1], k)
        yhat = np.concatenate(state.fh, axis=1)
        z = yhat
    else:
        yhat = np.zeros((state.runs, 0))
        z = y
    H = w.H
    e = np.repeat(w.u_at(k)[None], state.runs, axis=0)
    for j in range(H.shape[1]):
        e = e - H[None, :, j] * z[:, j, None]
    pi = np.empty_like(held)
    for p, c in enumerate(t.controllers):
        state.cx[p], state.ch[p] = batch_step(c, state.cx[p], state.ch[p], e[:, w.in_slices[p]], k)
        v = state.ch[p][:, 0]
        r = t.signal_ranges[p]
        out = (v < r.lo) | (v > r.hi)
        if out.any():
            state.clamp_events[:, p] += out
            v = np.clip(v, r.lo, r.hi)
        pi[:, p] = v
    state.pi = pi
    for m, ker in enumerate(state.kernels):
        ker.transition(pi[:, drivers[m]], streams.transition[m].row(k))
    if not (np.isfinite(y).all() and np.isfinite(e).all() and np.isfinite(pi).all()
            and np.isfinite(yhat).all() and all(ker.finite() for ker in state.kernels)):
        _raise_nonfinite(t, state, k, y, yhat, e, pi)
    return StepSignals(y_agents, y, yhat, e, pi), state


def _raise_nonfinite(t, state, k, y, yhat, e, pi):
    w = t._wiring
    checks = [(f"ensemble[{m}]", y[:, m]) for m in range(len(t.ensembles))]
    if t.filtered:
        checks += [(f"filter[{q}]", yhat[:, zs]) for q, zs in enumerate(w.src_slices)]
    for p in range(len(t.controllers)):
        checks.append((f"controller[{p}]", np.concatenate([e[:, w.in_slices[p]], pi[:, p:p + 1]], axis=1)))
    checks += [(f"ensemble[{m}]", None) for m, ker in enumerate(state.kernels) if not ker.finite()]
    for name, vals in checks:
        if vals is None or not np.isfinite(vals).all():
            raise SimulationError(f"non-finite signal in {name} at step {k}", step=k, component=name)
    raise SimulationError(f"non-finite signal at step {k}", step=k, component="unknown")
