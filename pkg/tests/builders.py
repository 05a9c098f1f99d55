"""Small factories shared by the test modules."""

import numpy as np

from ergoloop.control import LinearBlock, build_lag, realize_toy_controller, SignalRange
from ergoloop.ensemble import (AffineAgent, DiscreteAgent, Ensemble, LipschitzAgent, LipschitzMap,
                               ProbabilityFunction)
from ergoloop.simulate import InitialCondition, Scenario, Uniform
from ergoloop.topology import Topology

const = ProbabilityFunction.constant


def scalar_agent(a=0.5, bs=(0.0, 1.0), probs=None, ds=(0.0,), dprobs=None, floor=0.1, c=1.0, x0=None):
    probs = probs or [const(1.0 / len(bs), floor) for _ in bs]
    dprobs = dprobs or [const(1.0 / len(ds), floor if len(ds) > 1 else 0.0) for _ in ds]
    return AffineAgent([[a]], [c], [[b] for b in bs], probs, list(ds), dprobs, x0)


def deterministic_agent(a=0.0, b=0.0, c=1.0, d=0.0):
    return AffineAgent([[a]], [c], [[b]], [const(1.0)], [d], [const(1.0)])


def random_schur(rng, n, radius):
    """Random n x n matrix with spectral radius ``radius`` (exactly, up to rounding)."""
    m = rng.normal(size=(n, n))
    rho = np.max(np.abs(np.linalg.eigvals(m)))
    return m * (radius / rho) if rho > 0 else m


def random_affine_agent(rng, n, radius=0.8, branches=2, floor=0.1):
    A = random_schur(rng, n, radius)
    bs = [rng.normal(size=n) for _ in range(branches)]
    ds = list(rng.normal(size=branches))
    probs = [ProbabilityFunction.logistic(rng.uniform(-1, 1), rng.uniform(-2, 2), floor) for _ in range(branches)]
    dprobs = [ProbabilityFunction.logistic(rng.uniform(-1, 1), rng.uniform(-2, 2), floor) for _ in range(branches)]
    return AffineAgent(A, rng.normal(size=n), bs, probs, ds, dprobs)


def random_block(rng, n, m, p, radius=0.8, strictly_proper=False):
    A = random_schur(rng, n, radius)
    D = np.zeros((p, m)) if strictly_proper else rng.normal(size=(p, m))
    return LinearBlock(A, rng.normal(size=(n, m)), rng.normal(size=(p, n)), D)


def random_topology(kind, rng, max_dim=4, radius=0.8, branches=1):
    """Random topology of ``kind`` with 1- to ``max_dim``-dimensional blocks."""
    dim = lambda: int(rng.integers(1, max_dim + 1))
    M = int(rng.integers(1, 4)) if kind == "multi_sided" else 2
    P = {"two_sided": 2, "toy1": 2, "toy2": 1}.get(kind, M)
    ensembles = [Ensemble([random_affine_agent(rng, dim(), radius * rng.uniform(0.1, 1.0), branches)
                           for _ in range(int(rng.integers(1, 4)))]) for _ in range(M)]
    filtered = kind in ("two_sided", "multi_sided")
    filters = None
    src = [1] * M
    if filtered:
        src = [int(rng.integers(1, 3)) for _ in range(M)]
        filters = [random_block(rng, dim(), 1, src[q], radius * rng.uniform(0.1, 1.0)) for q in range(M)]
    controllers = []
    for p in range(P):
        m_in = int(rng.integers(1, 3))
        controllers.append(random_block(rng, dim(), m_in, 1, radius * rng.uniform(0.1, 1.0)))
    H = None
    if kind == "multi_sided":
        H = [[rng.normal(size=(controllers[p].m, src[q])) for q in range(M)] for p in range(P)]
    return Topology(kind, ensembles, controllers, filters, H, u=[float(v) for v in rng.normal(size=P)])


def toy_agent(mid, slope, floor=0.05, a=0.8):
    up = ProbabilityFunction.logistic(mid, slope, floor)
    down = ProbabilityFunction.logistic(mid, -slope, floor)
    return AffineAgent([[a]], [1.0], [[0.0], [1.0 - a]], [down, up], [0.0], [const(1.0)])


def toy1_topology(controller="toy", N=(50, 100)):
    if controller == "toy":
        ctrls = [realize_toy_controller(-4.01, 0.99, 0.1, 40), realize_toy_controller(-4.01, 0.99, 0.1, 20)]
    elif controller == "lag":
        ctrls = [build_lag(0.1, 0.01, 0.99, 40), build_lag(0.1, 0.01, 0.99, 20)]
    else:
        from ergoloop.control import build_pi
        ctrls = [build_pi(0.1, 0.01, 40), build_pi(0.1, 0.01, 20)]
    return Topology("toy1", [Ensemble.replicate(toy_agent(50, 0.04), N[0]),
                             Ensemble.replicate(toy_agent(60, 0.04), N[1])],
                    ctrls, u=[120.0, 120.0], signal_ranges=[SignalRange(0, 300), SignalRange(0, 300)])


def toy1_scenario(horizon=1800, controller="toy", N=(50, 100)):
    ic = InitialCondition(ensembles=[Uniform(0, 1, True), Uniform(0, 1, True)])
    return Scenario(toy1_topology(controller, N), horizon, ic, seed=0)


def lipschitz_agent(l=0.5, floor=0.1):
    maps = [LipschitzMap("tanh", [[1.0]], [0.0], scale=l), LipschitzMap("affine", [[l]], [1.0])]
    outs = [LipschitzMap("affine", [[1.0]], [0.0])]
    return LipschitzAgent(maps, [const(0.5, floor), const(0.5, floor)], outs, [const(1.0)])


def discrete_agent(tables, probs, outputs=None, state=0, n=None):
    n = n or len(tables[0])
    outputs = outputs or [list(range(n))]
    return DiscreteAgent(n, tables, probs, outputs, [const(1.0 / len(outputs))] * len(outputs), state)


def open_loop_scenario(agent, pi=0.0, horizon=1000, seed=0):
    """Two-sided scenario whose controllers emit the constant ``pi``: a single finite chain per agent."""
    def hold():
        return LinearBlock([[1.0]], [[0.0]], [[1.0]], [[0.0]], x=[pi])
    t = Topology("two_sided", [Ensemble([agent]), Ensemble([agent.copy()])], [hold(), hold()],
                 pi0=[pi, pi])
    return Scenario(t, horizon, seed=seed)


def stable_block(a=0.5, b=1.0):
    return LinearBlock([[a]], [[b]], [[1.0]], [[0.0]])


def certified_affine():
    """Two-sided affine market that passes every Thm1 check."""
    ens = [Ensemble.replicate(scalar_agent(a=0.5), 3), Ensemble.replicate(scalar_agent(a=-0.4), 2)]
    return Topology("two_sided", ens, [stable_block(), stable_block()], [stable_block(0.3), stable_block(0.2)])


def certified_lipschitz():
    return Topology("two_sided", [Ensemble([lipschitz_agent(0.5), lipschitz_agent(0.3)]),
                                  Ensemble([lipschitz_agent(0.6)])], [stable_block(), stable_block()])


def lazy_flip():
    """Two states, swap or stay with probability 1/2: a primitive graph."""
    return discrete_agent([[1, 0], [0, 1]], [const(0.5, 0.1), const(0.5, 0.1)])


def two_cycle():
    return discrete_agent([[1, 0]], [const(1.0)])


def certified_discrete():
    return Topology("two_sided", [Ensemble([lazy_flip()]), Ensemble([lazy_flip()])], [stable_block(), stable_block()])


def replace_agent(t, m, i, agent):
    """Copy of ``t`` with agent ``i`` of ensemble ``m`` swapped for ``agent``."""
    ens = [Ensemble(list(e.agents)) for e in t.ensembles]
    ens[m].agents[i] = agent
    return Topology(t.kind, ens, t.controllers, t.filters or None)


def lipschitz_one():
    a = lipschitz_agent(0.5)
    a.transition_maps[1] = LipschitzMap("affine", [[1.0]], [1.0])
    return a


# name -> (certified topology, mutation, expected failing (check, component))
MUTATIONS = {
    "agent eigenvalue 1": (certified_affine, lambda t: replace_agent(t, 1, 1, scalar_agent(a=1.0)),
                           ("Schur(A_i)", "ensemble[1].agent[1]")),
    "floor 0": (certified_affine,
                lambda t: replace_agent(t, 0, 2, scalar_agent(a=0.5, probs=[const(0.5, 0.1), const(0.5, 0.0)])),
                ("floor(p)", "ensemble[0].agent[2]")),
    "Lipschitz 1": (certified_lipschitz, lambda t: replace_agent(t, 0, 1, lipschitz_one()),
                    ("Lipschitz(l_ij)", "ensemble[0].agent[1]")),
    "imprimitive": (certified_discrete, lambda t: replace_agent(t, 1, 0, two_cycle()),
                    ("graph_primitive", "ensemble[1].agent[0]")),
}
