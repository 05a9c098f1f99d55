"""Agent populations with signal-dependent branch probabilities.

Three agent kinds are supported:

* :class:`AffineAgent` -- ``x+ = A x + b_j``, ``y = c.x + d_l``;
* :class:`LipschitzAgent` -- ``x+ = W_j(x)``, ``y = H_l(x)`` with maps from a
  closed library whose Lipschitz constants are known in closed form;
* :class:`DiscreteAgent` -- a finite state set with total transition maps.

Branch ``j`` is drawn with probability ``p_j(pi)``; the output branch ``l``
independently with ``p'_l(pi)``. Simulation goes through the vectorized
kernels built by :meth:`Ensemble.kernel`, which consume one uniform per agent
per draw kind and step.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .control import SignalRange
from .spectral import DimensionError, as_matrix, induced_2norm

logger = logging.getLogger(__name__)

__all__ = [
    "ProbabilityFunction",
    "normalize_branches",
    "LipschitzMap",
    "AffineAgent",
    "LipschitzAgent",
    "DiscreteAgent",
    "Ensemble",
    "evaluate_probabilities",
    "sample_transition",
    "sample_output",
    "ensemble_output",
    "agent_graph",
    "choose_branch",
]

FAMILIES = ("constant", "piecewise_linear", "logistic")


@dataclass(frozen=True)
class ProbabilityFunction:
    """A branch probability ``p(pi)`` clamped to ``[floor, 1]``.

    ``params`` by family: ``constant -> (value,)``,
    ``logistic -> (midpoint, slope)`` with
    ``p = floor + (1 - 2 floor) / (1 + exp(-slope (pi - midpoint)))``, and
    ``piecewise_linear -> (xs, ys)`` interpolated linearly and held flat
    outside the knots.
    """

    family: str
    params: tuple
    floor: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown probability family {self.family!r}; expected one of {FAMILIES}")
        if not 0.0 <= self.floor < 1.0:
            raise ValueError(f"floor must lie in [0, 1), got {self.floor}")
        if self.family == "piecewise_linear":
            xs, ys = self.params
            if len(xs) != len(ys) or len(xs) < 1 or any(b <= a for a, b in zip(xs, xs[1:])):
                raise ValueError("piecewise_linear needs equally long knot lists with increasing xs")

    @classmethod
    def constant(cls, value: float, floor: float = 0.0) -> "ProbabilityFunction":
        return cls("constant", (float(value),), float(floor))

    @classmethod
    def logistic(cls, midpoint: float, slope: float, floor: float = 0.0) -> "ProbabilityFunction":
        return cls("logistic", (float(midpoint), float(slope)), float(floor))

    @classmethod
    def piecewise_linear(cls, xs: Sequence[float], ys: Sequence[float], floor: float = 0.0) -> "ProbabilityFunction":
        return cls("piecewise_linear", (tuple(map(float, xs)), tuple(map(float, ys))), float(floor))

    def __call__(self, pi: float) -> float:
        return float(self.values(np.array([float(pi)]))[0])

    def values(self, pis) -> np.ndarray:
        """Vectorized evaluation over an array of signal values."""
        pis = np.asarray(pis, dtype=float)
        f = self.floor
        if self.family == "constant":
            v = np.full(pis.shape, self.params[0])
        elif self.family == "logistic":
            mid, slope = self.params
            t = slope * (pis - mid)
            z = np.exp(-np.abs(t))
            v = f + (1.0 - 2.0 * f) * np.where(t >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
        else:
            v = np.interp(pis, *self.params)
        return np.clip(v, f, 1.0)

    def to_dict(self) -> dict:
        d = {"family": self.family, "floor": self.floor}
        if self.family == "constant":
            d["value"] = self.params[0]
        elif self.family == "logistic":
            d["midpoint"], d["slope"] = self.params
        else:
            d["x"], d["y"] = list(self.params[0]), list(self.params[1])
        return d


def normalize_branches(raw: np.ndarray, floors: np.ndarray) -> np.ndarray:
    """Project clamped branch values onto the simplex, keeping every floor.

    ``p_j = f_j + (1 - sum f) (q_j - f_j) / sum(q - f)`` where ``q`` are the
    values already clamped to ``[f_j, 1]``. Vectors that already sum to one
    are returned unchanged; when every ``q_j == f_j`` the slack is split
    evenly. Works along the last axis.
    """
    q = np.asarray(raw, dtype=float)
    f = np.asarray(floors, dtype=float)
    excess = q - f
    total = excess.sum(axis=-1, keepdims=True)
    slack = 1.0 - f.sum()
    w = q.shape[-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        share = np.where(total > 0, excess / np.where(total > 0, total, 1.0), 1.0 / w)
    return f + slack * share


class _BranchSet:
    """Probability functions for one family of branches (transition or output)."""

    def __init__(self, functions: Sequence[ProbabilityFunction], what: str):
        if len(functions) < 1:
            raise ValueError(f"{what}: at least one branch is required")
        for fn in functions:
            if not isinstance(fn, ProbabilityFunction):
                raise TypeError(f"{what}: branch probabilities must be ProbabilityFunction instances")
        self.functions = tuple(functions)
        self.floors = np.array([fn.floor for fn in functions])
        if self.floors.sum() > 1.0 + 1e-12:
            raise ValueError(f"{what}: branch floors sum to {self.floors.sum()} > 1")

    def __len__(self):
        return len(self.functions)

    def __call__(self, pi: float) -> np.ndarray:
        if len(self.functions) == 1:
            return np.ones(1)
        return self.grid(np.array([float(pi)]))[0]

    def grid(self, pis: np.ndarray) -> np.ndarray:
        """Normalized probabilities on a grid, shape ``(len(pis), branches)``."""
        if len(self.functions) == 1:
            return np.ones((len(pis), 1))
        raw = np.stack([fn.values(pis) for fn in self.functions], axis=-1)
        return normalize_branches(raw, self.floors)


def choose_branch(p: np.ndarray, u: float) -> int:
    """Inverse-CDF branch choice for one uniform ``u`` in [0, 1)."""
    cdf = np.cumsum(p)
    cdf[-1] = 1.0
    return int(np.searchsorted(cdf, u, side="right"))


# ---------------------------------------------------------------------------
# Lipschitz map library
# ---------------------------------------------------------------------------

MAP_KINDS = ("affine", "saturated_linear", "tanh")


@dataclass(eq=False)
class LipschitzMap:
    """A map with an analytically known global Lipschitz constant.

    * ``affine``: ``M x + v``, constant ``||M||_2``
    * ``saturated_linear``: ``clip(M x + v, lo, hi)``, constant ``||M||_2``
    * ``tanh``: ``scale * tanh(M x) + v``, constant ``|scale| ||M||_2``

    ``declared`` may overstate the constant but never understate it.
    """

    kind: str
    M: np.ndarray
    v: np.ndarray
    lo: float = -np.inf
    hi: float = np.inf
    scale: float = 1.0
    declared: Optional[float] = None

    def __post_init__(self):
        if self.kind not in MAP_KINDS:
            raise ValueError(f"unknown map kind {self.kind!r}; expected one of {MAP_KINDS}")
        self.M = as_matrix(self.M, "M")
        self.v = np.array(self.v, dtype=float).reshape(self.M.shape[0])
        if self.declared is not None and self.declared < self.analytic_constant - 1e-12:
            raise ValueError(
                f"declared Lipschitz constant {self.declared} is below the analytic value {self.analytic_constant}"
            )

    @property
    def analytic_constant(self) -> float:
        k = induced_2norm(self.M)
        return abs(self.scale) * k if self.kind == "tanh" else k

    @property
    def lipschitz(self) -> float:
        return self.analytic_constant if self.declared is None else float(self.declared)

    @property
    def dim_in(self) -> int:
        return self.M.shape[1]

    @property
    def dim_out(self) -> int:
        return self.M.shape[0]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        z = self.M @ x
        if self.kind == "affine":
            return z + self.v
        if self.kind == "saturated_linear":
            return np.clip(z + self.v, self.lo, self.hi)
        return self.scale * np.tanh(z) + self.v

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "M": self.M.tolist(), "v": self.v.tolist()}
        if self.kind == "saturated_linear":
            d["lo"], d["hi"] = self.lo, self.hi
        if self.kind == "tanh":
            d["scale"] = self.scale
        if self.declared is not None:
            d["lipschitz"] = self.declared
        return d


# ---------------------------------------------------------------------------
# Agents
# ---------------------------------------------------------------------------


class _Agent:
    kind = ""
    transition_branches: _BranchSet
    output_branches: _BranchSet

    @property
    def transition_probs(self) -> tuple:
        return self.transition_branches.functions

    @property
    def output_probs(self) -> tuple:
        return self.output_branches.functions

    def copy(self):
        return copy.deepcopy(self)


@dataclass(eq=False)
class AffineAgent(_Agent):
    """``x+ = A x + b_j`` with probability ``p_j(pi)``; ``y = c.x + d_l`` with ``p'_l(pi)``."""

    A: np.ndarray
    c: np.ndarray
    b_choices: list
    b_probs: list
    d_choices: list
    d_probs: list
    x: Optional[np.ndarray] = None
    kind = "affine"

    def __post_init__(self):
        self.A = as_matrix(self.A, "A", square=True)
        n = self.A.shape[0]
        if n < 1:
            raise DimensionError("affine agent needs a state of dimension >= 1")
        self.c = np.array(self.c, dtype=float).reshape(n)
        self.b_choices = [np.array(b, dtype=float).reshape(n) for b in self.b_choices]
        self.d_choices = [float(d) for d in self.d_choices]
        if len(self.b_choices) != len(self.b_probs) or len(self.d_choices) != len(self.d_probs):
            raise ValueError("each offset choice needs exactly one probability function")
        self.transition_branches = _BranchSet(self.b_probs, "b_choices")
        self.output_branches = _BranchSet(self.d_probs, "d_choices")
        self.x = np.zeros(n) if self.x is None else np.array(self.x, dtype=float).reshape(n)
        if not (np.all(np.isfinite(self.c)) and all(np.all(np.isfinite(b)) for b in self.b_choices)
                and np.all(np.isfinite(self.d_choices))):
            raise ValueError("affine agent parameters must be finite")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def apply_transition(self, j: int) -> None:
        self.x = self.A @ self.x + self.b_choices[j]

    def output_value(self, l: int) -> float:
        return float(self.c @ self.x + self.d_choices[l])


@dataclass(eq=False)
class LipschitzAgent(_Agent):
    """``x+ = W_j(x)``, ``y = H_l(x)`` with maps from :class:`LipschitzMap`."""

    transition_maps: list
    transition_prob_fns: list
    output_maps: list
    output_prob_fns: list
    x: Optional[np.ndarray] = None
    kind = "lipschitz"

    def __post_init__(self):
        n = self.transition_maps[0].dim_in if self.transition_maps else 0
        for w in self.transition_maps:
            if w.dim_in != n or w.dim_out != n:
                raise DimensionError(f"transition maps must send R^{n} to R^{n}")
        for h in self.output_maps:
            if h.dim_in != n or h.dim_out != 1:
                raise DimensionError(f"output maps must send R^{n} to R")
        if len(self.transition_maps) != len(self.transition_prob_fns) or len(self.output_maps) != len(self.output_prob_fns):
            raise ValueError("each map needs exactly one probability function")
        self.transition_branches = _BranchSet(self.transition_prob_fns, "transition_maps")
        self.output_branches = _BranchSet(self.output_prob_fns, "output_maps")
        self.x = np.zeros(n) if self.x is None else np.array(self.x, dtype=float).reshape(n)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def apply_transition(self, j: int) -> None:
        self.x = self.transition_maps[j](self.x)

    def output_value(self, l: int) -> float:
        return float(self.output_maps[l](self.x)[0])


@dataclass(eq=False)
class DiscreteAgent(_Agent):
    """Finite-state agent; maps are integer tables ``state -> state``.

    ``output_maps`` are float tables ``state -> demand``.
    """

    n_states: int
    transition_maps: list
    transition_prob_fns: list
    output_maps: list
    output_prob_fns: list
    state: int = 0
    kind = "discrete"
    max_states = 1 << 16

    def __post_init__(self):
        self.n_states = int(self.n_states)
        if not 1 <= self.n_states <= self.max_states:
            raise ValueError(f"n_states must lie in [1, {self.max_states}], got {self.n_states}")
        self.transition_maps = [np.asarray(t, dtype=np.int64).reshape(-1) for t in self.transition_maps]
        self.output_maps = [np.asarray(o, dtype=float).reshape(-1) for o in self.output_maps]
        for t in self.transition_maps:
            if t.shape[0] != self.n_states or t.min() < 0 or t.max() >= self.n_states:
                raise ValueError("transition tables must be total maps on the declared state set")
        for o in self.output_maps:
            if o.shape[0] != self.n_states or not np.all(np.isfinite(o)):
                raise ValueError("output tables must assign a finite demand to every state")
        if len(self.transition_maps) != len(self.transition_prob_fns) or len(self.output_maps) != len(self.output_prob_fns):
            raise ValueError("each map needs exactly one probability function")
        self.transition_branches = _BranchSet(self.transition_prob_fns, "transition_maps")
        self.output_branches = _BranchSet(self.output_prob_fns, "output_maps")
        self.state = int(self.state)
        if not 0 <= self.state < self.n_states:
            raise ValueError(f"initial state {self.state} outside [0, {self.n_states})")

    @property
    def n(self) -> int:
        return 1

    def apply_transition(self, j: int) -> None:
        self.state = int(self.transition_maps[j][self.state])

    def output_value(self, l: int) -> float:
        return float(self.output_maps[l][self.state])


Agent = Union[AffineAgent, LipschitzAgent, DiscreteAgent]


# ---------------------------------------------------------------------------
# Single-agent operations
# ---------------------------------------------------------------------------


def _in_range(pi: float, signal_range: Optional[SignalRange]) -> float:
    if signal_range is None or signal_range.lo <= pi <= signal_range.hi:
        return pi
    clamped = signal_range.clamp(pi)
    logger.warning("signal %r outside [%r, %r]; clamped to %r", pi, signal_range.lo, signal_range.hi, clamped)
    return clamped


def evaluate_probabilities(agent: Agent, pi: float, kind: str = "transition",
                           signal_range: Optional[SignalRange] = None) -> np.ndarray:
    """Normalized branch probabilities of ``agent`` at signal ``pi``.

    ``kind`` selects the transition or output branches. A signal outside
    ``signal_range`` is clamped to the boundary and logged.
    """
    pi = _in_range(float(pi), signal_range)
    if kind == "transition":
        return agent.transition_branches(pi)
    if kind == "output":
        return agent.output_branches(pi)
    raise ValueError(f"kind must be 'transition' or 'output', got {kind!r}")


def sample_transition(agent: Agent, pi: float, rng: np.random.Generator,
                      signal_range: Optional[SignalRange] = None):
    """Draw a transition branch and apply it in place; returns the new state."""
    j = choose_branch(evaluate_probabilities(agent, pi, "transition", signal_range), rng.random())
    agent.apply_transition(j)
    return agent.state if agent.kind == "discrete" else agent.x


def sample_output(agent: Agent, pi: float, rng: np.random.Generator,
                  signal_range: Optional[SignalRange] = None) -> float:
    l = choose_branch(evaluate_probabilities(agent, pi, "output", signal_range), rng.random())
    return agent.output_value(l)


def ensemble_output(ensemble: "Ensemble", pi: float, rng: np.random.Generator,
                    signal_range: Optional[SignalRange] = None) -> tuple[float, np.ndarray]:
    """Total output ``y = sum_i y_i`` and the per-agent outputs.

    Draws one uniform per agent, in agent order, as repeated
    :func:`sample_output` calls would.
    """
    pi = _in_range(float(pi), signal_range)
    u = rng.random(ensemble.N)
    per_agent = np.empty(ensemble.N)
    for bs, idx in ensemble.probability_groups("output"):
        cdf = np.cumsum(bs(pi))
        cdf[-1] = 1.0
        for i, l in zip(idx, np.searchsorted(cdf, u[idx], side="right")):
            per_agent[i] = ensemble.agents[i].output_value(int(l))
    return float(per_agent.sum()), per_agent


def agent_graph(agent: DiscreteAgent) -> np.ndarray:
    """Adjacency of the state graph: ``s -> s'`` iff some map with positive floor sends ``s`` to ``s'``.

    With a single map the branch probability is identically one, so that
    map counts as positive regardless of its declared floor.
    """
    if agent.kind != "discrete":
        raise TypeError("agent_graph requires a DiscreteAgent")
    n = agent.n_states
    adj = np.zeros((n, n), dtype=bool)
    single = len(agent.transition_maps) == 1
    for table, fn in zip(agent.transition_maps, agent.transition_probs):
        if single or fn.floor > 0:
            adj[np.arange(n), table] = True
    return adj


# ---------------------------------------------------------------------------
# Ensembles and simulation kernels
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class Ensemble:
    """A homogeneous population of agents of one kind."""

    agents: list
    name: str = ""

    def __post_init__(self):
        self.agents = list(self.agents)
        if not self.agents:
            raise ValueError("an ensemble needs at least one agent")
        kinds = {a.kind for a in self.agents}
        if len(kinds) != 1:
            raise ValueError(f"ensemble {self.name!r} mixes agent kinds {sorted(kinds)}")

    @classmethod
    def replicate(cls, agent: Agent, size: int, name: str = "") -> "Ensemble":
        if size < 1:
            raise ValueError("ensemble size must be >= 1")
        return cls([agent.copy() for _ in range(size)], name)

    @property
    def N(self) -> int:
        return len(self.agents)

    @property
    def kind(self) -> str:
        return self.agents[0].kind

    def copy(self) -> "Ensemble":
        return Ensemble([a.copy() for a in self.agents], self.name)

    def kernel(self, runs: int = 1) -> "_Kernel":
        """Simulation state for ``runs`` lockstep copies of this ensemble."""
        kinds = {"affine": _AffineKernel, "lipschitz": _LipschitzKernel, "discrete": _DiscreteKernel}
        return kinds[self.kind](self, runs)

    def probability_groups(self, kind: str) -> list[tuple[_BranchSet, np.ndarray]]:
        """Distinct branch sets and the indices of the agents sharing each."""
        groups: dict = {}
        for i, a in enumerate(self.agents):
            bs = a.transition_branches if kind == "transition" else a.output_branches
            groups.setdefault(bs.functions, (bs, []))[1].append(i)
        return [(bs, np.array(idx)) for bs, idx in groups.values()]


class _Kernel:
    """Vectorized state of one ensemble across ``R`` lockstep runs.

    Branch selection is inverse-CDF on one uniform per agent and run; padded
    branches carry zero probability and are never selected. All arithmetic
    is elementwise along the run axis, so a run's trajectory is bitwise the
    same whatever ``R`` is.
    """

    def __init__(self, ens: Ensemble, R: int):
        self.N = ens.N
        self.R = int(R)
        self._tr_groups = ens.probability_groups("transition")
        self._out_groups = ens.probability_groups("output")
        self._wt = max(len(a.transition_branches) for a in ens.agents)
        self._wo = max(len(a.output_branches) for a in ens.agents)
        self._agents = np.arange(self.N)[None, :]

    def _cdf(self, groups, width, pi) -> np.ndarray:
        if len(groups) == 1:
            cdf = np.ones((len(pi), 1, width))
            p = groups[0][0].grid(pi)
            cdf[:, 0, :p.shape[1] - 1] = np.cumsum(p[:, :-1], axis=1)
            return cdf
        cdf = np.ones((len(pi), self.N, width))
        for bs, idx in groups:
            p = bs.grid(pi)
            cdf[:, idx, :p.shape[1] - 1] = np.cumsum(p[:, :-1], axis=1)[:, None, :]
        return cdf

    def _choose(self, groups, width, pi, u) -> np.ndarray:
        if width == 1:
            return np.zeros((self.R, self.N), dtype=np.intp)
        cdf = self._cdf(groups, width, pi)
        return (u[:, :, None] >= cdf[:, :, :-1]).sum(axis=2)

    def output(self, pi: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Per-agent outputs, shape ``(R, N)``, for signals ``pi`` of shape ``(R,)``."""
        return self._output(self._choose(self._out_groups, self._wo, pi, u))

    def transition(self, pi: np.ndarray, u: np.ndarray) -> None:
        self._transition(self._choose(self._tr_groups, self._wt, pi, u))

    def finite(self) -> bool:
        return True


class _AffineKernel(_Kernel):
    def __init__(self, ens: Ensemble, R: int):
        super().__init__(ens, R)
        agents = ens.agents
        n = max(a.n for a in agents)
        N = self.N
        self.n = n
        self.A = np.zeros((N, n, n))
        self.c = np.zeros((N, n))
        self.b = np.zeros((N, self._wt, n))
        self.d = np.zeros((N, self._wo))
        x0 = np.zeros((N, n))
        self.dims = np.array([a.n for a in agents])
        for i, a in enumerate(agents):
            k = a.n
            self.A[i, :k, :k] = a.A
            self.c[i, :k] = a.c
            self.b[i, :len(a.b_choices), :k] = a.b_choices
            self.d[i, :len(a.d_choices)] = a.d_choices
            x0[i, :k] = a.x
        self.x = np.repeat(x0[None], self.R, axis=0)

    def set_states(self, xs, run: int | None = None) -> None:
        rows = slice(None) if run is None else run
        for i, x in enumerate(xs):
            self.x[rows, i, :self.dims[i]] = x

    def states(self, run: int = 0) -> list:
        return [self.x[run, i, :k].copy() for i, k in enumerate(self.dims)]

    def _output(self, l):
        y = self.c[None, :, 0] * self.x[:, :, 0]
        for j in range(1, self.n):
            y = y + self.c[None, :, j] * self.x[:, :, j]
        return y + self.d[self._agents, l]

    def _transition(self, j):
        x = self.x
        acc = self.A[None, :, :, 0] * x[:, :, None, 0]
        for col in range(1, self.n):
            acc = acc + self.A[None, :, :, col] * x[:, :, None, col]
        self.x = acc + self.b[self._agents, j]

    def finite(self) -> bool:
        return bool(np.isfinite(self.x).all())


class _LipschitzKernel(_Kernel):
    def __init__(self, ens: Ensemble, R: int):
        super().__init__(ens, R)
        self.agents = [[a.copy() for a in ens.agents] for _ in range(self.R)]

    def set_states(self, xs, run: int | None = None) -> None:
        for r in range(self.R) if run is None else [run]:
            for a, x in zip(self.agents[r], xs):
                a.x = np.array(x, dtype=float).reshape(a.n)

    def states(self, run: int = 0) -> list:
        return [a.x.copy() for a in self.agents[run]]

    def _output(self, l):
        return np.array([[a.output_value(int(j)) for a, j in zip(row, lr)] for row, lr in zip(self.agents, l)])

    def _transition(self, j):
        for row, jr in zip(self.agents, j):
            for a, jj in zip(row, jr):
                a.apply_transition(int(jj))

    def finite(self) -> bool:
        return all(np.isfinite(a.x).all() for row in self.agents for a in row)


class _DiscreteKernel(_Kernel):
    def __init__(self, ens: Ensemble, R: int):
        super().__init__(ens, R)
        agents = ens.agents
        S = max(a.n_states for a in agents)
        N = self.N
        self.tables = np.zeros((N, self._wt, S), dtype=np.int64)
        self.outputs = np.zeros((N, self._wo, S))
        for i, a in enumerate(agents):
            self.tables[i, :len(a.transition_maps), :a.n_states] = a.transition_maps
            self.outputs[i, :len(a.output_maps), :a.n_states] = a.output_maps
        s0 = np.array([a.state for a in agents], dtype=np.int64)
        self.s = np.repeat(s0[None], self.R, axis=0)
        self.n_states = np.array([a.n_states for a in agents])

    def set_states(self, xs, run: int | None = None) -> None:
        s = np.array([int(np.asarray(x).reshape(-1)[0]) for x in xs], dtype=np.int64)
        if np.any(s < 0) or np.any(s >= self.n_states):
            raise ValueError("initial discrete state outside the declared state set")
        self.s[slice(None) if run is None else run] = s

    def states(self, run: int = 0) -> list:
        return [int(v) for v in self.s[run]]

    def _output(self, l):
        return self.outputs[self._agents, l, self.s]

    def _transition(self, j):
        self.s = self.tables[self._agents, j, self.s]
