"""Ergodicity and feasibility diagnostics, plus an exact finite-chain oracle.

The empirical side compares long-run time averages of agent outputs across
initial conditions. The exact side builds the transition matrix of a
finite-state agent under a constant signal, iterates the measure to its
fixed point, and checks the simulation engine's Cesàro averages against the
resulting expectations.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .ensemble import DiscreteAgent
from .simulate import InitialCondition, Scenario, TrajectoryRecord, run_many
from .spectral import as_matrix, is_strongly_connected
from .streams import BLOCK, UniformStream
from .topology import SimulationError

__all__ = [
    "ErgodicityReport",
    "StationaryDistribution",
    "OracleReport",
    "cesaro_average",
    "unique_ergodicity_test",
    "feasibility_check",
    "exact_transition_matrix",
    "stationary_distribution",
    "oracle_compare",
    "ks_statistic",
    "ks_critical_value",
    "integrated_autocorr_time",
    "MAX_EXACT_STATES",
]

MAX_EXACT_STATES = 4096
KS_ALPHA = 0.01
KS_EPS = 1e-9


def cesaro_average(record: TrajectoryRecord, signal: str, burn_in: int = 0) -> float:
    """Mean of ``signal`` over steps ``burn_in .. K - 1``."""
    x = record.column(signal)
    if not 0 <= burn_in < len(x):
        raise ValueError(f"burn_in must lie in [0, {len(x)}), got {burn_in}")
    return float(np.mean(x[burn_in:]))


# ---------------------------------------------------------------------------
# Distribution comparison helpers
# ---------------------------------------------------------------------------


def ks_statistic(a, b, eps: float = 0.0) -> float:
    """Two-sample Kolmogorov-Smirnov distance, tolerant to shifts below ``eps``.

    ``max_x max(F_a(x) - F_b(x + eps), F_b(x) - F_a(x + eps))``; with
    ``eps = 0`` this is the usual statistic. The tolerance keeps samples
    that agree to rounding error (two copies of a synchronized orbit, say)
    from looking maximally different.
    """
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("KS statistic needs two non-empty samples")
    x = np.concatenate([a, b])
    fa = np.searchsorted(a, x, side="right") / a.size
    fb = np.searchsorted(b, x, side="right") / b.size
    fa_eps = np.searchsorted(a, x + eps, side="right") / a.size
    fb_eps = np.searchsorted(b, x + eps, side="right") / b.size
    return float(max(np.max(fa - fb_eps), np.max(fb - fa_eps), 0.0))


def ks_critical_value(n: int, m: int, alpha: float = KS_ALPHA) -> float:
    """Asymptotic two-sample critical value ``c(alpha) sqrt((n + m) / (n m))``."""
    c = math.sqrt(-math.log(alpha / 2.0) / 2.0)
    return c * math.sqrt((n + m) / (n * m))


def integrated_autocorr_time(x, c: float = 5.0) -> float:
    """``1 + 2 sum_t rho(t)`` with Sokal's self-consistent window ``W >= c tau``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        return 1.0
    x = x - x.mean()
    var = float(np.dot(x, x)) / n
    if var <= 1e-300 * max(1.0, float(np.max(np.abs(x))) ** 2) or var == 0.0:
        return 1.0
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acf = np.fft.irfft(f * np.conj(f), size)[:n] / (n * var)
    tau = 1.0
    for w in range(1, n):
        tau += 2.0 * acf[w]
        if w >= c * tau:
            break
    return max(tau, 1.0)


# ---------------------------------------------------------------------------
# Initial-condition independence
# ---------------------------------------------------------------------------


@dataclass
class ErgodicityReport:
    verdict: str
    max_discrepancy: float
    ks_stats: dict
    per_agent_averages: dict
    standard_errors: dict
    ks_critical: dict
    tolerance: float
    burn_in: int
    horizon: int
    runs_per_ic: int
    coupling: str
    reasons: list = field(default_factory=list)
    feasibility: dict = field(default_factory=dict)
    oracle: Optional[dict] = None

    def to_dict(self) -> dict:
        d = {
            "verdict": self.verdict,
            "max_discrepancy": self.max_discrepancy,
            "ks_stats": self.ks_stats,
            "per_agent_averages": self.per_agent_averages,
            "standard_errors": self.standard_errors,
            "ks_critical": self.ks_critical,
            "tolerance": self.tolerance,
            "burn_in": self.burn_in,
            "horizon": self.horizon,
            "runs_per_ic": self.runs_per_ic,
            "coupling": self.coupling,
            "reasons": list(self.reasons),
            "feasibility": self.feasibility,
        }
        if self.oracle is not None:
            d["oracle"] = self.oracle
        return d


def _batch_means_se(x: np.ndarray, batches: int = 20) -> float:
    n = x.size // batches
    if n < 1:
        return float(np.std(x) / math.sqrt(max(x.size, 1)))
    means = x[: n * batches].reshape(batches, n).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(batches))


def unique_ergodicity_test(scenario: Scenario, initial_conditions: Sequence[InitialCondition],
                           runs_per_ic: int = 5, tolerance: float = 0.02,
                           burn_in: Optional[int] = None, coupling: str = "common",
                           horizon: Optional[int] = None) -> ErgodicityReport:
    """Compare per-agent Cesàro averages and tail distributions across initial conditions.

    Every pair of initial conditions must agree on every agent's average
    within ``tolerance + 3 sqrt(se_a**2 + se_b**2)`` and on each ensemble's
    tail output distribution at the 1% KS level. Tail samples are thinned
    to roughly independent draws using the integrated autocorrelation time.

    ``coupling="common"`` drives run ``r`` of every initial condition with
    the same random streams (common random numbers), so only the initial
    state differs between groups; ``"independent"`` gives every run its own
    streams.
    """
    if len(initial_conditions) < 2:
        raise ValueError("unique_ergodicity_test needs at least 2 initial conditions")
    if runs_per_ic < 1:
        raise ValueError("runs_per_ic must be >= 1")
    if coupling not in ("common", "independent"):
        raise ValueError("coupling must be 'common' or 'independent'")
    K = scenario.horizon if horizon is None else int(horizon)
    burn = K // 2 if burn_in is None else int(burn_in)
    if not 0 <= burn < K:
        raise ValueError(f"burn_in must lie in [0, {K})")
    sc = replace(scenario, granularity="per_agent", horizon=K)
    t = sc.topology
    J = len(initial_conditions)
    agent_cols = [f"y_ens{m + 1}_{i + 1}" for m, e in enumerate(t.ensembles) for i in range(e.N)]
    ens_cols = [f"y_ens{m + 1}" for m in range(len(t.ensembles))]

    jobs = [(j, r) for j in range(J) for r in range(runs_per_ic)]
    stream_idx = [r if coupling == "common" else j * runs_per_ic + r for j, r in jobs]
    init_idx = [j * runs_per_ic + r for j, r in jobs]
    width = len(agent_cols) + len(ens_cols)
    per_chunk = max(1, min(len(jobs), (256 * 2**20) // max(8 * K * (width + 8), 1)))

    averages = np.full((J, runs_per_ic, len(agent_cols)), np.nan)
    tails = {c: [[None] * runs_per_ic for _ in range(J)] for c in ens_cols}
    refs = t.references
    feas = {} if refs is None else {
        c: {"reference": float(r), "violating_steps": 0, "runs_with_violations": 0, "first": []}
        for c, r in zip(ens_cols, refs)
    }
    reasons, failed = [], False
    for s in range(0, len(jobs), per_chunk):
        chunk = range(s, min(s + per_chunk, len(jobs)))
        try:
            recs = run_many(sc, [stream_idx[i] for i in chunk],
                            [initial_conditions[jobs[i][0]] for i in chunk],
                            init_indices=[init_idx[i] for i in chunk])
        except SimulationError:
            recs = []
            for i in chunk:
                try:
                    recs.append(run_many(sc, [stream_idx[i]], [initial_conditions[jobs[i][0]]],
                                         init_indices=[init_idx[i]])[0])
                except SimulationError as exc:
                    recs.append(None)
                    failed = True
                    reasons.append(f"initial condition {jobs[i][0]}, run {jobs[i][1]}: {exc}")
        for i, rec in zip(chunk, recs):
            if rec is None:
                continue
            j, r = jobs[i]
            averages[j, r] = [float(np.mean(rec.column(c)[burn:])) for c in agent_cols]
            for c in ens_cols:
                tails[c][j][r] = np.array(rec.column(c)[burn:])
            for c, f in feas.items():
                bad = feasibility_check(rec.column(c), f["reference"])
                if bad:
                    f["violating_steps"] += len(bad)
                    f["runs_with_violations"] += 1
                    if len(f["first"]) < 10:
                        f["first"].append({"initial_condition": j, "run": r, "step": bad[0]})
            del rec

    ok_rows = ~np.isnan(averages).any(axis=2)
    mean_avg = np.array([averages[j][ok_rows[j]].mean(axis=0) if ok_rows[j].any() else np.full(len(agent_cols), np.nan)
                         for j in range(J)])
    se = np.zeros_like(mean_avg)
    for j in range(J):
        rows = averages[j][ok_rows[j]]
        if len(rows) >= 2:
            se[j] = rows.std(axis=0, ddof=1) / math.sqrt(len(rows))
        elif len(rows) == 1:
            r = int(np.flatnonzero(ok_rows[j])[0])
            # one run: batch means over the tail of the aggregate is the best we have
            se[j] = max(_batch_means_se(tails[c][j][r]) for c in ens_cols if tails[c][j][r] is not None)

    consistent = True
    max_disc = 0.0
    for a, b in itertools.combinations(range(J), 2):
        if np.isnan(mean_avg[a]).any() or np.isnan(mean_avg[b]).any():
            continue
        diff = np.abs(mean_avg[a] - mean_avg[b])
        max_disc = max(max_disc, float(diff.max()))
        bound = tolerance + 3.0 * np.sqrt(se[a] ** 2 + se[b] ** 2)
        if np.any(diff > bound):
            consistent = False
            worst = int(np.argmax(diff - bound))
            reasons.append(
                f"initial conditions {a} vs {b}: agent {agent_cols[worst]} averages differ by "
                f"{diff[worst]:.6g} > {bound[worst]:.6g}"
            )

    ks_stats, ks_crit = {}, {}
    for c in ens_cols:
        series = [x for row in tails[c] for x in row if x is not None]
        if not series:
            continue
        step = max(1, math.ceil(2.0 * max(integrated_autocorr_time(x) for x in series)))
        scale = max(1.0, max(float(np.max(np.abs(x))) for x in series))
        pooled = [np.concatenate([x[::step] for x in row if x is not None]) if any(x is not None for x in row) else None
                  for row in tails[c]]
        ks_stats[c], ks_crit[c] = {}, {}
        for a, b in itertools.combinations(range(J), 2):
            if pooled[a] is None or pooled[b] is None:
                continue
            d = ks_statistic(pooled[a], pooled[b], eps=KS_EPS * scale)
            crit = ks_critical_value(pooled[a].size, pooled[b].size)
            key = f"{a}-{b}"
            ks_stats[c][key] = d
            ks_crit[c][key] = crit
            if d > crit:
                consistent = False
                reasons.append(f"initial conditions {a} vs {b}: KS distance of {c} tails {d:.4g} > {crit:.4g}")

    verdict = "inconclusive" if failed else ("consistent" if consistent else "inconsistent")
    per_agent = {str(j): dict(zip(agent_cols, map(float, mean_avg[j]))) for j in range(J)}
    ses = {str(j): dict(zip(agent_cols, map(float, se[j]))) for j in range(J)}
    return ErgodicityReport(verdict, max_disc, ks_stats, per_agent, ses, ks_crit, tolerance, burn, K,
                            runs_per_ic, coupling, reasons, feas)


# ---------------------------------------------------------------------------
# Feasibility
# ---------------------------------------------------------------------------


def feasibility_check(record: Union[TrajectoryRecord, Sequence[float]], r: float,
                      signal: Optional[str] = None) -> list[int]:
    """Steps ``k`` with ``y(k) > r`` (equality is not a violation)."""
    if not r > 0:
        raise ValueError(f"reference bound must be positive, got {r}")
    if isinstance(record, TrajectoryRecord):
        if signal is None:
            ys = [c for c in record.columns if c.startswith("y_ens") and "_" not in c[5:]]
            if len(ys) != 1:
                raise ValueError(f"record has several ensemble outputs {ys}; name the signal to check")
            signal = ys[0]
        y = record.column(signal)
    else:
        y = np.asarray(record, dtype=float)
    return np.flatnonzero(y > r).tolist()


# ---------------------------------------------------------------------------
# Exact finite-state oracle
# ---------------------------------------------------------------------------


def exact_transition_matrix(agent: DiscreteAgent, pi: float) -> np.ndarray:
    """Row-stochastic ``P[s, s'] = sum of p_j(pi) over maps with w_j(s) = s'``."""
    if agent.kind != "discrete":
        raise TypeError("exact_transition_matrix requires a DiscreteAgent")
    n = agent.n_states
    if n > MAX_EXACT_STATES:
        raise ValueError(
            f"{n} states exceed the exact-oracle bound of {MAX_EXACT_STATES}; "
            "use Monte-Carlo estimates (unique_ergodicity_test) instead"
        )
    p = agent.transition_branches(float(pi))
    P = np.zeros((n, n))
    rows = np.arange(n)
    for table, pj in zip(agent.transition_maps, p):
        np.add.at(P, (rows, table), pj)
    return P


@dataclass
class StationaryDistribution:
    support: list
    probabilities: np.ndarray
    residual: float
    iterations: int
    period: int = 1
    _cache: dict = field(default_factory=dict, repr=False)

    def expectation(self, f, key: Optional[str] = None) -> float:
        """``E_mu[f]`` for ``f`` given as a per-state array or a callable on states."""
        if key is not None and key in self._cache:
            return self._cache[key]
        vals = np.asarray(f(np.asarray(self.support)) if callable(f) else f, dtype=float)
        out = float(self.probabilities @ vals)
        if key is not None:
            self._cache[key] = out
        return out


def stationary_distribution(P, mu0=None, tol: float = 1e-13, max_iter: int = 1_000_000,
                            max_period: int = 64) -> StationaryDistribution:
    """Fixed point of ``mu <- mu P`` by measure iteration.

    Iterates from ``mu0`` (uniform by default) until the L1 change is at most
    ``tol``. If the iterates instead settle into a cycle of length
    ``d <= max_period`` (a periodic chain), the cycle is averaged and the
    average is checked for invariance.
    """
    P = as_matrix(P, "P", square=True)
    n = P.shape[0]
    if n == 0:
        raise ValueError("P must be non-empty")
    if np.any(P < -1e-15) or np.max(np.abs(P.sum(axis=1) - 1.0)) > 1e-10:
        raise ValueError("P is not row-stochastic (negative entries or rows not summing to 1)")
    mu = np.full(n, 1.0 / n) if mu0 is None else np.asarray(mu0, dtype=float).reshape(n)
    if np.any(mu < 0) or abs(mu.sum() - 1.0) > 1e-10:
        raise ValueError("mu0 must be a probability vector")
    history = [mu]
    for it in range(1, max_iter + 1):
        nxt = mu @ P
        change = float(np.abs(nxt - mu).sum())
        mu = nxt
        if change <= tol:
            mu = mu / mu.sum()
            return StationaryDistribution(list(range(n)), mu, float(np.abs(mu @ P - mu).sum()), it)
        history.append(mu)
        if len(history) > max_period + 1:
            history.pop(0)
        if it % 256 == 0:
            for d in range(2, min(max_period, len(history) - 1) + 1):
                if np.abs(history[-1] - history[-1 - d]).sum() <= tol:
                    avg = np.mean(history[-d:], axis=0)
                    avg = avg / avg.sum()
                    res = float(np.abs(avg @ P - avg).sum())
                    if res <= 1e-12:
                        return StationaryDistribution(list(range(n)), avg, res, it, d)
    raise ValueError(f"measure iteration did not converge within {max_iter} iterations and no cycle was found")


@dataclass
class OracleReport:
    agent: str
    pi: float
    exact: float
    cesaro: list
    errors: list
    tolerance: float
    horizon: int
    seeds: list
    residual: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "agent": self.agent, "pi": self.pi, "exact": self.exact, "cesaro": self.cesaro,
            "errors": self.errors, "tolerance": self.tolerance, "horizon": self.horizon,
            "seeds": self.seeds, "residual": self.residual, "passed": self.passed,
        }


def _open_loop_agents(scenario: Scenario) -> list[tuple[str, int, int, DiscreteAgent, float]]:
    t = scenario.topology
    if any(e.kind != "discrete" for e in t.ensembles):
        raise ValueError("oracle comparison needs every ensemble to hold discrete agents")
    pis = []
    for p, c in enumerate(t.controllers):
        if np.any(c.B != 0) or np.any(c.D != 0) or not np.array_equal(c.A @ c.x, c.x):
            raise ValueError(
                f"controller[{p}] is not constant: the exact oracle needs an open loop with a "
                "constant signal (B = 0, D = 0 and a fixed controller state)"
            )
        pis.append(t.signal_ranges[p].clamp(float((c.C @ c.x)[0])))
    for p, v in enumerate(t.pi0):
        if t.signal_ranges[p].clamp(v) != pis[p]:
            raise ValueError(f"initial signal of controller[{p}] differs from its constant output")
    out = []
    for m, ens in enumerate(t.ensembles):
        pi = pis[t.drivers[m]]
        for i, a in enumerate(ens.agents):
            out.append((f"y_ens{m + 1}_{i + 1}", m, i, a, pi))
    return out


def _branch_choices(bs, width: int, pi: float, u: np.ndarray) -> np.ndarray:
    """Branch indices exactly as the simulation kernels pick them."""
    if width == 1:
        return np.zeros(u.shape, dtype=np.intp)
    p = bs.grid(np.array([pi]))[0]
    cdf = np.ones(width)
    cdf[: p.size - 1] = np.cumsum(p[:-1])
    return (u[:, None] >= cdf[None, :-1]).sum(axis=1)


def _agent_path(agent: DiscreteAgent, m: int, i: int, N: int, wt: int, wo: int, pi: float,
                seed: int, run_index: int, horizon: int, start: int):
    """States and outputs of one agent under a constant signal, using the engine's streams."""
    tr = UniformStream(seed, run_index, m, "transition", N)
    ou = UniformStream(seed, run_index, m, "output", N)
    nb = -(-horizon // BLOCK)
    u_tr = np.concatenate([tr.block(b)[:, 0, i] for b in range(nb)])[:horizon]
    u_out = np.concatenate([ou.block(b)[:, 0, i] for b in range(nb)])[:horizon]
    js = _branch_choices(agent.transition_branches, wt, pi, u_tr).tolist()
    tables = [t.tolist() for t in agent.transition_maps]
    states = [0] * horizon
    s = int(start)
    for k, j in enumerate(js):
        states[k] = s
        s = tables[j][s]
    states = np.array(states, dtype=np.int64)
    ls = _branch_choices(agent.output_branches, wo, pi, u_out)
    outputs = np.stack(agent.output_maps)[ls, states]
    return states, outputs


def oracle_compare(source: Union[Scenario, DiscreteAgent], observable=None, horizon: int = 1_000_000,
                   seeds: Sequence[int] = (0, 1, 2, 3, 4), tolerance: float = 0.01,
                   pi: Optional[float] = None, start: Optional[int] = None) -> list[OracleReport]:
    """Cesàro averages along simulated paths against exact stationary expectations.

    ``source`` is an open-loop discrete scenario (constant signal, no
    feedback) or a single :class:`DiscreteAgent` with a signal ``pi``.
    ``seeds`` are run indices under the scenario's base seed (base seed 0
    for a bare agent). ``observable`` maps states to reals (array or
    callable); by default the
    agent's random output is used, whose exact mean is
    ``sum_s mu(s) sum_l p'_l out_l(s)``. Paths use the same random streams
    and branch rule as the simulation engine, consumed in bulk since the
    probabilities are constant.
    """
    if isinstance(source, Scenario):
        agents = _open_loop_agents(source)
        ens_N = [e.N for e in source.topology.ensembles]
        widths = [(max(len(a.transition_branches) for a in e.agents), max(len(a.output_branches) for a in e.agents))
                  for e in source.topology.ensembles]
        base_seed = source.seed
    elif isinstance(source, DiscreteAgent):
        if pi is None:
            raise ValueError("a bare agent needs a constant signal pi")
        agents = [("y_ens1_1", 0, 0, source, float(pi))]
        ens_N = [1]
        widths = [(len(source.transition_branches), len(source.output_branches))]
        base_seed = 0
    else:
        raise TypeError("oracle_compare needs a Scenario or a DiscreteAgent")
    reports = []
    for name, m, i, agent, p in agents:
        P = exact_transition_matrix(agent, p)
        s0 = agent.state if start is None else int(start)
        mu0 = None
        if not (is_strongly_connected(P > 0)):
            # reducible chain: the time average follows the start state
            mu0 = np.zeros(agent.n_states)
            mu0[s0] = 1.0
        sd = stationary_distribution(P, mu0)
        if observable is None:
            po = agent.output_branches(p)
            f = sum(pl * o for pl, o in zip(po, agent.output_maps))
        else:
            f = observable
        exact = sd.expectation(f)
        fvals = np.asarray(f(np.arange(agent.n_states)) if callable(f) else f, dtype=float)
        cesaro, errors = [], []
        for seed in seeds:
            states, outputs = _agent_path(agent, m, i, ens_N[m], widths[m][0], widths[m][1], p,
                                          base_seed, seed, horizon, s0)
            val = float(outputs.mean()) if observable is None else float(fvals[states].mean())
            cesaro.append(val)
            errors.append(abs(val - exact))
        reports.append(OracleReport(name, p, exact, cesaro, errors, tolerance, horizon, list(seeds),
                                    sd.residual, max(errors) <= tolerance and sd.residual <= 1e-12))
    return reports
