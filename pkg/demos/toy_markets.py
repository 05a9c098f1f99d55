"""
Two toy markets under feedback
==============================

Load the shipped toy scenarios, check the stability certificate, run the
ten-run batch and look at the tail of the averaged error signal. Then swap
the lag-type controllers for integrating PI controllers and watch the
certificate fail.
"""

import numpy as np

from ergoloop.certify import certify, explain
from ergoloop.config import build_scenario, builtin_config
from ergoloop.control import build_pi
from ergoloop.simulate import run_batch, summarize
from ergoloop.topology import Topology

# The configs are plain JSON; the probability curves are flagged as modeled.
cfg = builtin_config("toy1")
print(cfg["provenance"])
sc = build_scenario(cfg)
print(explain(certify(sc.topology)).splitlines()[0])

# Ten runs of 1800 steps, then per-step mean and std across runs.
summary = summarize(run_batch(sc, cfg["simulation"]["runs"]))
tail = slice(-900, None)
for name in ("e_1", "e_2", "y_ens1", "y_ens2", "pi_1", "pi_2"):
    j = summary.columns.index(name)
    print(f"{name:7s} final-900 mean {summary.mean[tail, j].mean():9.3f}   mean std {summary.std[tail, j].mean():7.3f}")

# An integrator has a pole on the unit circle: the certificate no longer applies.
t = sc.topology
pi_loop = Topology(t.kind, t.ensembles, [build_pi(0.1, 0.01, 40), build_pi(0.1, 0.01, 20)],
                   u=list(t.u), signal_ranges=t.signal_ranges)
report = certify(pi_loop)
print(report.verdict)
for check in report.failed:
    print(" ", check.name, check.target, check.detail)

# Toy 2: one controller drives both populations from the demand-supply gap.
cfg2 = builtin_config("toy2")
sc2 = build_scenario(cfg2)
s2 = summarize(run_batch(sc2, cfg2["simulation"]["runs"]))
e = s2.mean[-900:, s2.columns.index("e_1")]
print(f"toy2: final-900 mean error {e.mean():.3f}, max |e| of the mean curve {np.abs(e).max():.3f}")
