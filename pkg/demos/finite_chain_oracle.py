"""
Exact answers for finite-state agents
=====================================

For an agent with finitely many states and a constant signal, the long-run
average of any observable is an exact number: the expectation under the
stationary distribution of the transition matrix. We compute it, then
check that the simulation engine's time averages approach it.
"""

import numpy as np

from ergoloop.diagnostics import exact_transition_matrix, oracle_compare, stationary_distribution
from ergoloop.ensemble import DiscreteAgent, ProbabilityFunction

const = ProbabilityFunction.constant

# Three states on a ring: stay with probability 0.9, step forward with 0.1.
agent = DiscreteAgent(3, [[0, 1, 2], [1, 2, 0]], [const(0.9), const(0.1)], [[0.0, 1.0, 2.0]], [const(1.0)])
P = exact_transition_matrix(agent, pi=0.0)
print(P)

sd = stationary_distribution(P)
print("stationary", sd.probabilities, "residual", sd.residual)
print("E[state] =", sd.expectation([0, 1, 2]))

# Time averages along engine paths, for growing horizons.
for horizon in (10_000, 100_000, 1_000_000):
    rep = oracle_compare(agent, observable=[0.0, 1.0, 2.0], pi=0.0, horizon=horizon, seeds=range(5))[0]
    print(f"horizon {horizon:>9,d}: worst error over 5 seeds {max(rep.errors):.5f}")

# A periodic chain has an invariant measure but iterates never settle;
# averaging over one period recovers it.
flip = stationary_distribution(np.array([[0.0, 1.0], [1.0, 0.0]]), mu0=[1.0, 0.0])
print("2-cycle:", flip.probabilities, "period", flip.period)
