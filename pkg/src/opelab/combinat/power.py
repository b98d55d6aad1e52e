"""Power counting: the exponent of L^r carried by each bounded term.

All arithmetic is on Fractions so that the exhaustive inequality check is exact.
"""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, NamedTuple, Sequence

from ..errors import LedgerError
from .blocks import BlockTable, FactorDims, TermShape, build_block_table, enumerate_shapes

STAGES = ("I", "II", "III", "IV", "V", "VI", "VII", "VIII")


class NuResult(NamedTuple):
    value: Fraction
    positive: bool
    binding: str


def nu(
    d,
    gamma,
    epsilon,
    deltas: Sequence,
    spectator_dims: Sequence = (),
) -> NuResult:
    """min{gamma - 2 eps, min_i(d/2 - Delta_i - 3 eps), min_spect(d/2 - [A] - eps)}.

    A non-positive value is returned as is, with ``positive`` False and a warning.
    """
    d, g, e = Fraction(d), Fraction(gamma), Fraction(epsilon)
    cands = [(g - 2 * e, "gamma")]
    cands += [(d / 2 - Fraction(x) - 3 * e, f"delta[{k}]") for k, x in enumerate(deltas)]
    cands += [(d / 2 - Fraction(x) - e, f"spectator[{k}]") for k, x in enumerate(spectator_dims)]
    value, binding = min(cands, key=lambda t: t[0])
    if value <= 0:
        warnings.warn(f"rate nu = {value} is not positive (bound by {binding})", RuntimeWarning, stacklevel=2)
    return NuResult(value, value > 0, binding)


def _sizes(shape: TermShape) -> dict[str, frozenset]:
    i1g, i1boo, i1bco = shape.i1.parts
    i2g, i2by, i2bx = shape.i2.parts
    return {"1G": i1g, "1BOO": i1boo, "1BCO": i1bco, "2G": i2g, "2BY": i2by, "2BX": i2bx}


def max_components(table: BlockTable) -> int:
    """Largest admissible q: every component holds two bad X vertices."""
    return len(table.VBX) // 2


def alpha_total(table: BlockTable, q: int) -> Fraction:
    """Closed form of the final exponent of L^r for one term."""
    n_bad = len(table.shape.bad)
    if 2 * q > n_bad:
        raise LedgerError(f"2q = {2 * q} exceeds |I_B| = {n_bad}: a component would hold fewer than two bad X vertices")
    if q == 0 and n_bad:
        raise LedgerError("a term with bad vertices has at least one component")
    d, g, e = Fraction(table.d), table.gamma, table.epsilon
    sz = _sizes(table.shape)
    total = -d * q + (g - e) * len(sz["1G"]) + (g - 2 * e) * len(sz["2G"])
    for i in sz["1BOO"] | sz["1BCO"] | sz["2BY"] | sz["2BX"]:
        total += d - table.dims[i].delta - 3 * e
    for i in table.shape.bad34:
        total += d - table.dim_D(i) - e
    return total


@dataclass
class PowerCountLedger:
    """Per-index L^r exponents at every stage, with the final reconciliation."""

    table: BlockTable
    q: int
    stages: dict[str, dict[str, Fraction]] = field(default_factory=dict)
    increments: list[tuple[str, str, Fraction]] = field(default_factory=list)

    def total(self, stage: str) -> Fraction:
        return sum(self.stages[stage].values(), Fraction(0))

    @property
    def closed_form(self) -> Fraction:
        return alpha_total(self.table, self.q)

    @property
    def reconciled(self) -> bool:
        """Stage VIII equals both the closed form and the sum of increments."""
        inc = sum((v for _, _, v in self.increments), Fraction(0))
        return self.total("VIII") == self.closed_form == inc

    def to_dict(self) -> dict:
        return {
            "q": self.q,
            "stages": {s: {k: str(v) for k, v in self.stages[s].items()} for s in STAGES},
            "totals": {s: str(self.total(s)) for s in STAGES},
            "alpha_total": str(self.closed_form),
            "reconciled": self.reconciled,
        }


def build_ledger(table: BlockTable, q: int) -> PowerCountLedger:
    """Follow the exponent of L^r through every bounding step of one term."""
    alpha_total(table, q)
    d, g, e = Fraction(table.d), table.gamma, table.epsilon
    shape = table.shape
    sz = _sizes(shape)
    ledger = PowerCountLedger(table, q)
    renorm = sorted(shape.i123[0] | shape.i123[1])

    def dims(i):
        f = table.dims[i]
        return f.a, f.b, f.delta

    def record(stage, key, value, why):
        prev = ledger.stages[STAGES[STAGES.index(stage) - 1]].get(key, Fraction(0)) if stage != "I" else Fraction(0)
        ledger.stages[stage][key] = value
        if value != prev:
            ledger.increments.append((stage, why, value - prev))

    ledger.stages["I"] = {}
    # mollifiers, Z factors and hard coefficient bounds
    ledger.stages["II"] = {}
    for i in renorm:
        a, b, dl = dims(i)
        record("II", f"i{i}", a + b - dl - 2 * d - e, f"mollifier and Z bounds for index {i}")
    # first local integrations: x_i on I1 (alpha = 0), y_i on I2
    ledger.stages["III"] = {}
    for i in renorm:
        a, b, dl = dims(i)
        val = a + b - dl - d - e if i in shape.i123[0] else -d - 2 * e
        record("III", f"i{i}", val, f"local integration for index {i}")
    ledger.stages["IV"] = dict(ledger.stages["III"])
    # y_i on I1G, I1BCO, I2G, I2BX
    ledger.stages["V"] = {}
    for i in renorm:
        a, b, dl = dims(i)
        key = f"i{i}"
        if i in sz["1G"]:
            val = g - e
        elif i in sz["1BCO"]:
            val = table.channels[i] - dl - 2 * e
        elif i in sz["2G"]:
            val = g - 2 * e
        elif i in sz["2BX"]:
            val = -2 * e
        else:
            val = ledger.stages["IV"][key]
        record("V", key, val, f"local y-integration for index {i}")
    ledger.stages["VI"] = dict(ledger.stages["V"])
    ledger.stages["VII"] = dict(ledger.stages["VI"])
    # two-scale pin and sum: L^{dr} per bad vertex except the q roots, L^{-beta r} per tau edge
    ledger.stages["VIII"] = dict(ledger.stages["VII"])
    record("VIII", "roots", -d * q, "roots integrated with global lemmas")
    for v in table.VB:
        record("VIII", f"v{v[0]}{v[1]}", d - table.beta[v], f"vertex {v[0]}{v[1]} and its tau edge")
    return ledger


@dataclass
class ExhaustiveReport:
    checked: int = 0
    empty: int = 0
    failures: list = field(default_factory=list)
    unreconciled: list = field(default_factory=list)
    min_slack: Fraction | None = None
    nu_by_case: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.failures and not self.unreconciled and self.checked > 0

    def to_dict(self) -> dict:
        return {
            "checked": self.checked,
            "empty_terms": self.empty,
            "failures": self.failures[:20],
            "n_failures": len(self.failures),
            "unreconciled": self.unreconciled[:20],
            "min_slack": str(self.min_slack),
            "nu": {k: str(v) for k, v in self.nu_by_case.items()},
            "pass": self.passed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def free_field_dims(dim_phi) -> dict[str, Fraction]:
    """Dimensions of 1, phi and :phi^2:."""
    s = Fraction(dim_phi)
    return {"1": Fraction(0), "phi": s, "phi2": 2 * s}


def exhaustive_check(
    d=1,
    dim_phi=Fraction(1, 5),
    gamma=Fraction(3, 10),
    epsilon=Fraction(1, 100),
    max_m: int = 3,
    max_n: int = 3,
    spectator_labels: Sequence[str] = ("phi", "phi2"),
) -> ExhaustiveReport:
    """alpha_total >= nu (|I1| + |I2|) over every term of every small instance.

    Each renormalized product fuses phi x phi with C* = :phi^2:, so
    Delta_i = 2[phi]; I1BCO channels range over the labels of dimension at
    most Delta_i; spectators range over ``spectator_labels``; q ranges over
    every admissible component count.
    """
    lab = free_field_dims(dim_phi)
    s = lab["phi"]
    delta = lab["phi2"]
    channel_dims = sorted({v for v in lab.values() if v <= delta})
    rep = ExhaustiveReport()
    for m in range(0, max_m + 1):
        for n in range(max(m, 1), max_n + 1):
            for spect in itertools.product(spectator_labels, repeat=n - m):
                dims = {i: FactorDims(s, s, delta) for i in range(1, m + 1)}
                for k, name in enumerate(spect):
                    dims[m + 1 + k] = FactorDims(lab[name])
                rate = nu(d, gamma, epsilon, [delta] * m, [lab[x] for x in spect])
                rep.nu_by_case[f"m={m},n={n},spect={','.join(spect) or '-'}"] = rate.value
                for shape in enumerate_shapes(m, n):
                    bco = sorted(shape.i1[2])
                    for chans in itertools.product(channel_dims, repeat=len(bco)):
                        table = build_block_table(shape, dims, gamma, epsilon, dict(zip(bco, chans)), d=d)
                        n_bad = len(shape.bad)
                        if n_bad == 1:
                            rep.empty += 1
                            continue
                        qs = [0] if n_bad == 0 else range(1, max_components(table) + 1)
                        for q in qs:
                            ledger = build_ledger(table, q)
                            lhs = ledger.closed_form
                            rhs = rate.value * (len(shape.i123[0]) + len(shape.i123[1]))
                            rep.checked += 1
                            slack = lhs - rhs
                            rep.min_slack = slack if rep.min_slack is None else min(rep.min_slack, slack)
                            tag = {"m": m, "n": n, "spect": list(spect), "q": q, "alpha_total": str(lhs), "bound": str(rhs)}
                            if not ledger.reconciled:
                                rep.unreconciled.append(tag)
                            if slack < 0:
                                rep.failures.append(tag)
    return rep


__all__ = [
    "STAGES",
    "ExhaustiveReport",
    "NuResult",
    "PowerCountLedger",
    "alpha_total",
    "build_ledger",
    "exhaustive_check",
    "free_field_dims",
    "max_components",
    "nu",
]
