"""Randomized verification suites for the pin-and-sum and two-scale constructions."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ..errors import EmptyTerm
from .blocks import FactorDims, build_block_table, enumerate_shapes
from .ffe import all_schedules, certificate_count, check_schedule, count_ffe, enumerate_ffe, nn_endofunction, nn_indicator
from .twoscale import check_plan, construct_tau_sigma, sample_term_configuration, two_scale_schedule


@dataclass
class SuiteReport:
    name: str
    checked: int = 0
    skipped: int = 0
    failures: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.checked > 0 and not self.failures

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "checked": self.checked,
            "skipped": self.skipped,
            "n_failures": len(self.failures),
            "failures": self.failures[:20],
            "stats": self.stats,
            "pass": self.passed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def pinsum_suite(n_configs: int = 1000, max_points: int = 5, max_p: int = 6, seed: int = 0) -> SuiteReport:
    """Endofunction counts, nearest-neighbour certificates and schedule validity.

    For each random configuration the nearest-neighbour map must satisfy every
    indicator, brute force over all endofunctions must find at least one
    certificate, and every hairy-cycle schedule, for every root including
    contrarian ones, must pass the validity checker.
    """
    rep = SuiteReport("pinsum")
    counts = {}
    for p in range(2, max_p + 1):
        listed = len(enumerate_ffe(p))
        counts[p] = listed
        if listed != (p - 1) ** p or count_ffe(p) != (p - 1) ** p:
            rep.failures.append({"p": p, "count": listed})
    rep.stats["ffe_counts"] = {str(k): v for k, v in counts.items()}
    rng = np.random.default_rng(seed)
    n_schedules = 0
    for k in range(n_configs):
        n = int(rng.integers(2, max_points + 1))
        d = int(rng.integers(1, 4))
        pts = rng.uniform(-1, 1, (n, d))
        tau = nn_endofunction(pts)
        tag = {"config": k, "n": n, "d": d}
        if not nn_indicator(pts, tau):
            rep.failures.append({**tag, "why": "nearest-neighbour map fails its own indicator"})
        if certificate_count(pts) < 1:
            rep.failures.append({**tag, "why": "no certificate among all endofunctions"})
        for comp, root, steps in all_schedules(tau, contrarian=True):
            ok, why = check_schedule(comp.edges(), steps)
            n_schedules += 1
            if not ok:
                rep.failures.append({**tag, "root": root, "why": why})
        rep.checked += 1
    rep.stats["schedules_checked"] = n_schedules
    return rep


def claim_suite(
    n_configs: int = 1000,
    max_size: int = 2,
    delta: float = 4.0,
    L: float = 2.0,
    r: float = -3.0,
    d: int = 2,
    seed: int = 0,
    dim_phi=Fraction(1, 5),
    gamma=Fraction(3, 10),
    epsilon=Fraction(1, 100),
) -> SuiteReport:
    """The covering claim and the two-scale plan on random configurations of every term shape."""
    rep = SuiteReport("claim")
    rng = np.random.default_rng(seed)
    s = Fraction(dim_phi)
    shapes = 0
    plans = 0
    for m in range(0, max_size + 1):
        for n in range(max(m, 1), max_size + 1):
            dims = {i: FactorDims(s, s, 2 * s) for i in range(1, m + 1)}
            dims.update({i: FactorDims(s) for i in range(m + 1, n + 1)})
            for shape in enumerate_shapes(m, n):
                chans = {i: Fraction(0) for i in shape.i1[2]}
                table = build_block_table(shape, dims, gamma, epsilon, chans, d=d)
                shapes += 1
                for k in range(n_configs):
                    pts = sample_term_configuration(table, rng, delta, L, r, d)
                    try:
                        g = construct_tau_sigma(pts, table, delta, L, r)
                    except EmptyTerm:
                        rep.skipped += 1
                        continue
                    rep.checked += 1
                    if not g.claim_holds:
                        bad = [key for key, v in g.indicators.items() if not v]
                        rep.failures.append({"m": m, "n": n, "config": k, "why": bad})
                        continue
                    ok, why = check_plan(two_scale_schedule(g, table), g)
                    plans += 1
                    if not ok:
                        rep.failures.append({"m": m, "n": n, "config": k, "why": why})
    rep.stats.update({"shapes": shapes, "plans_checked": plans, "empty_terms": rep.skipped})
    return rep


__all__ = ["SuiteReport", "claim_suite", "pinsum_suite"]
