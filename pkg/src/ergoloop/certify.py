"""Mechanical checks of the sufficient conditions for unique ergodicity.

A topology is matched to one certificate by its kind and agent kind:

============  ==========  ===========
topology      agents      certificate
============  ==========  ===========
two_sided     affine      Thm1
two_sided     lipschitz   Thm2
two_sided     discrete    Thm3
multi_sided   affine      Thm4
toy1          affine      Prop1
toy2          affine      Prop2
============  ==========  ===========

Each certificate is a list of hypotheses; every hypothesis becomes one or
more named checks. The verdict is ``certified_unique`` only when every
check passes. For discrete agents a strongly connected but periodic joint
graph gives ``certified_existence``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from math import gcd
from typing import Optional

import numpy as np

from .ensemble import agent_graph
from .spectral import (M_MAX, SCHUR_TOL, graph_period, is_schur, is_strongly_connected,
                       power_contraction_order, spectral_radius)
from .topology import Topology, assemble_augmented_matrix

__all__ = ["Check", "CertificationReport", "CertifyOptions", "certify", "explain", "match_theorem", "VERDICTS"]

VERDICTS = ("certified_unique", "certified_existence", "not_certified")

_MATCH = {
    ("two_sided", "affine"): "Thm1",
    ("two_sided", "lipschitz"): "Thm2",
    ("two_sided", "discrete"): "Thm3",
    ("multi_sided", "affine"): "Thm4",
    ("toy1", "affine"): "Prop1",
    ("toy2", "affine"): "Prop2",
}

HYPOTHESES = {
    "Schur(A_i)": "every agent state matrix is Schur (all eigenvalues strictly inside the unit circle)",
    "Schur(A_c)": "every controller is internally stable (Schur state matrix)",
    "Schur(A_f)": "every filter is internally stable (Schur state matrix)",
    "floor(p)": "every transition branch probability is bounded below by a positive constant on the signal range",
    "floor(p')": "every output branch probability is bounded below by a positive constant on the signal range",
    "Lipschitz(l_ij)": "every transition map is a strict contraction (declared Lipschitz constant below 1)",
    "graph_strongly_connected": "the joint state graph of the finite-state agents is strongly connected",
    "graph_primitive": "the joint state graph of the finite-state agents is primitive (strongly connected and aperiodic)",
    "contraction(A_aug)": "some power of the augmented state matrix has induced 2-norm below 1",
}

EDGE_NOTE = (
    "graph edges are taken to be transitions s -> w_j(s) of maps whose probability floor is positive; "
    "this edge set is an interpretation"
)


@dataclass
class Check:
    name: str
    target: str
    passed: bool
    detail: str
    hypothesis: str = ""

    def __post_init__(self):
        if not self.hypothesis:
            self.hypothesis = HYPOTHESES.get(self.name, "")

    def to_dict(self) -> dict:
        return {"name": self.name, "target": self.target, "result": "pass" if self.passed else "fail",
                "detail": self.detail, "hypothesis": self.hypothesis}


@dataclass
class CertificationReport:
    verdict: str
    applicable_theorem: Optional[str]
    checks: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def failed(self) -> list:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "applicable_theorem": self.applicable_theorem,
                "checks": [c.to_dict() for c in self.checks], "notes": list(self.notes)}


@dataclass(frozen=True)
class CertifyOptions:
    tol: float = SCHUR_TOL
    grid_points: int = 1001
    m_max: int = M_MAX
    product_cap: int = 4096


def match_theorem(t: Topology) -> tuple[Optional[str], str]:
    kinds = sorted({e.kind for e in t.ensembles})
    if len(kinds) != 1:
        return None, f"ensembles mix agent kinds {kinds}; no certificate covers mixed populations"
    thm = _MATCH.get((t.kind, kinds[0]))
    if thm is None:
        return None, f"no certificate covers a {t.kind} topology with {kinds[0]} agents"
    return thm, ""


def _groups(ens, key):
    """Agents of one ensemble grouped by an identity key, in first-seen order."""
    out: dict = {}
    for i, a in enumerate(ens.agents):
        out.setdefault(key(a), []).append(i)
    return list(out.values())


def _target(m: int, idx: list) -> str:
    name = f"ensemble[{m}].agent[{idx[0]}]"
    return name if len(idx) == 1 else f"{name} (+{len(idx) - 1} identical)"


def _schur_checks(t: Topology, opts: CertifyOptions, agents: bool) -> list[Check]:
    checks = []
    if agents:
        for m, ens in enumerate(t.ensembles):
            for idx in _groups(ens, lambda a: (a.A.shape, a.A.tobytes())):
                A = ens.agents[idx[0]].A
                ok, margin = is_schur(A, opts.tol)
                checks.append(Check("Schur(A_i)", _target(m, idx), ok,
                                    f"spectral radius {spectral_radius(A):.12g} (margin {margin:.3g})"))
    for name, blocks, label in (("Schur(A_f)", t.filters, "filter"), ("Schur(A_c)", t.controllers, "controller")):
        for b, blk in enumerate(blocks):
            if blk.n == 0:
                checks.append(Check(name, f"{label}[{b}]", True, "stateless block"))
                continue
            ok, margin = is_schur(blk.A, opts.tol)
            checks.append(Check(name, f"{label}[{b}]", ok,
                                f"spectral radius {spectral_radius(blk.A):.12g} (margin {margin:.3g})"))
    return checks


def _floor_checks(t: Topology, opts: CertifyOptions) -> list[Check]:
    checks = []
    for m, ens in enumerate(t.ensembles):
        rng = t.signal_range_for(m)
        grid = np.unique(np.concatenate([rng.grid(opts.grid_points), [rng.lo, rng.hi]]))
        for kind, name in (("transition", "floor(p)"), ("output", "floor(p')")):
            attr = "transition_branches" if kind == "transition" else "output_branches"
            for idx in _groups(ens, lambda a: getattr(a, attr).functions):
                bs = getattr(ens.agents[idx[0]], attr)
                if len(bs) == 1:
                    checks.append(Check(name, _target(m, idx), True, "single branch (probability identically 1)"))
                    continue
                floors = bs.floors
                probs = bs.grid(grid)
                low = probs.min(axis=0)
                bad = [j for j in range(len(bs)) if floors[j] <= 0 or low[j] < floors[j] - 1e-12]
                if bad:
                    j = bad[0]
                    detail = (f"branch {j}: declared floor {floors[j]:.6g}, minimum {low[j]:.6g} "
                              f"on [{rng.lo:g}, {rng.hi:g}]")
                else:
                    detail = f"minimum branch probability {low.min():.6g} >= floors {floors.min():.6g} > 0"
                checks.append(Check(name, _target(m, idx), not bad, detail))
    return checks


def _lipschitz_checks(t: Topology) -> tuple[list[Check], list[str]]:
    checks, notes = [], []
    for m, ens in enumerate(t.ensembles):
        for i, a in enumerate(ens.agents):
            target = f"ensemble[{m}].agent[{i}]"
            ls = [w.lipschitz for w in a.transition_maps]
            worst = int(np.argmax(ls))
            ok = all(v < 1.0 for v in ls)
            checks.append(Check("Lipschitz(l_ij)", target, ok,
                                f"largest transition constant l[{worst}] = {ls[worst]:.6g}"))
            lo = [h.lipschitz for h in a.output_maps]
            notes.append(f"{target}: output map constants {', '.join(f'{v:.6g}' for v in lo)} (informational)")
    return checks, notes


def _graph_checks(t: Topology, opts: CertifyOptions) -> tuple[list[Check], bool, bool]:
    """Joint graph checks; returns (checks, strongly_connected, primitive)."""
    graphs = []
    for m, ens in enumerate(t.ensembles):
        for i, a in enumerate(ens.agents):
            graphs.append((f"ensemble[{m}].agent[{i}]", agent_graph(a)))
    checks = []
    periods = []
    sc_all = True
    for name, g in graphs:
        sc = is_strongly_connected(g)
        if not sc:
            sc_all = False
            checks.append(Check("graph_strongly_connected", name, False, "agent state graph is not strongly connected"))
            periods.append(None)
        else:
            periods.append(graph_period(g))
    total = int(np.prod([g.shape[0] for _, g in graphs], dtype=float))
    if not sc_all:
        return checks, False, False
    if total <= opts.product_cap:
        joint = reduce(lambda x, y: np.kron(x, y), (g.astype(np.int8) for _, g in graphs)).astype(bool)
        sc = is_strongly_connected(joint)
        prim = sc and graph_period(joint) == 1
        how = f"joint graph on {total} states built explicitly"
    else:
        # tensor product of two strongly connected digraphs is strongly connected iff their
        # periods are coprime, and then has period lcm = product; fold that over the factors
        sc, acc = True, 1
        for p in periods:
            if gcd(acc, p) != 1:
                sc = False
                break
            acc *= p
        prim = all(p == 1 for p in periods)
        how = f"joint graph on {total} states analysed through factor periods {sorted(set(periods))}"
    target = "ensembles" if len(graphs) > 1 else graphs[0][0]
    checks.append(Check("graph_strongly_connected", target, sc, how))
    if sc:
        bad = [name for (name, _), p in zip(graphs, periods) if p != 1]
        detail = how if prim else f"{how}; periodic agents: {', '.join(bad) if bad else 'joint graph'}"
        checks.append(Check("graph_primitive", bad[0] if (bad and not prim) else target, prim, detail))
    return checks, sc, prim


def _contraction_check(t: Topology, opts: CertifyOptions) -> Check:
    aug = assemble_augmented_matrix(t)
    k = power_contraction_order(aug.A, opts.m_max)
    if k is None:
        return Check("contraction(A_aug)", "augmented system", False,
                     f"no power k <= {opts.m_max} of the {aug.dim}x{aug.dim} augmented matrix has norm below 1")
    return Check("contraction(A_aug)", "augmented system", True,
                 f"||A_aug^{k}||_2 < 1 for the {aug.dim}x{aug.dim} augmented matrix")


def certify(t: Topology, options: Optional[CertifyOptions] = None) -> CertificationReport:
    """Check the hypotheses of the certificate matching ``t``."""
    opts = options or CertifyOptions()
    thm, why = match_theorem(t)
    if thm is None:
        return CertificationReport("not_certified", None, [], [why])
    affine = thm in ("Thm1", "Thm4", "Prop1", "Prop2")
    checks = _schur_checks(t, opts, agents=affine)
    checks += _floor_checks(t, opts)
    notes = []
    if thm == "Thm2":
        lc, notes = _lipschitz_checks(t)
        checks += lc
    sc = prim = True
    if thm == "Thm3":
        gc, sc, prim = _graph_checks(t, opts)
        checks += gc
        notes.append(EDGE_NOTE)
    if affine:
        if all(c.passed for c in checks if c.name.startswith("Schur")):
            checks.append(_contraction_check(t, opts))
        else:
            notes.append("augmented contraction check skipped: a Schur check failed")
    others_ok = all(c.passed for c in checks if not c.name.startswith("graph_"))
    if others_ok and sc and prim:
        verdict = "certified_unique"
    elif thm == "Thm3" and others_ok and sc:
        verdict = "certified_existence"
    else:
        verdict = "not_certified"
    return CertificationReport(verdict, thm, checks, notes)


def explain(report: CertificationReport) -> str:
    """Plain-text rendering, one line per check."""
    lines = [f"verdict: {report.verdict}"]
    if report.applicable_theorem is None:
        lines.append("no applicable certificate for this topology")
    else:
        lines.append(f"certificate: {report.applicable_theorem}")
    for c in report.checks:
        mark = "PASS" if c.passed else "FAIL"
        lines.append(f"[{mark}] {c.name} on {c.target}: {c.detail} -- requires: {c.hypothesis}")
    for n in report.notes:
        lines.append(f"note: {n}")
    return "\n".join(lines)
