"""
Does the long run forget where it started?
==========================================

Unique ergodicity says each agent's time-averaged output converges to a
constant that does not depend on the initial state. We test that
empirically on a certified loop and on one that fails the certificate.
"""

from ergoloop.certify import certify
from ergoloop.control import LinearBlock
from ergoloop.diagnostics import unique_ergodicity_test
from ergoloop.ensemble import AffineAgent, Ensemble, ProbabilityFunction
from ergoloop.simulate import InitialCondition, Scenario, Uniform
from ergoloop.topology import Topology

logistic = ProbabilityFunction.logistic
const = ProbabilityFunction.constant


def agent(a, mid, slope, push=1.0):
    # two branches: decay towards 0, or get pushed up
    return AffineAgent([[a]], [1.0], [[0.0], [push]], [logistic(mid, -slope, 0.05), logistic(mid, slope, 0.05)],
                       [0.0], [const(1.0)])


def market(a, push=1.0):
    blocks = [LinearBlock([[0.9]], [[0.05]], [[1.0]], [[0.0]]), LinearBlock([[0.8]], [[0.05]], [[1.0]], [[0.0]])]
    filters = [LinearBlock([[0.5]], [[0.5]], [[1.0]], [[0.0]]), LinearBlock([[0.5]], [[0.5]], [[1.0]], [[0.0]])]
    riders = Ensemble([agent(a, 0.0, 1.0, push), agent(0.6, 0.3, 0.8)])
    drivers = Ensemble([agent(0.5, 0.0, -1.0)])
    return Topology("two_sided", [riders, drivers], blocks, filters, u=[1.0, 1.0])


starts = [
    InitialCondition(ensembles=[Uniform(-20, -20), Uniform(-20, -20)], name="low"),
    InitialCondition(ensembles=[Uniform(0, 1), Uniform(0, 1)], name="middle"),
    InitialCondition(ensembles=[Uniform(20, 20), Uniform(20, 20)], name="high"),
]

# With A = 1 and no push the first population never moves: it keeps its start.
for a, push in ((0.7, 1.0), (1.0, 0.0)):
    t = market(a, push)
    cert = certify(t)
    rep = unique_ergodicity_test(Scenario(t, 20_000), starts, runs_per_ic=3)
    print(f"A = {a}: certificate {cert.verdict}, empirical verdict {rep.verdict}, "
          f"max discrepancy {rep.max_discrepancy:.3g}")
    for reason in rep.reasons[:2]:
        print("   ", reason)
