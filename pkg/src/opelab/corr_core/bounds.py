"""Bound templates as checkable predicates over sampled configurations."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..errors import FormatError
from .correlations import CorrelationSystem, PointConfiguration, as_points
from .structure import BoundParams, Label, OpeStructure, Real
from .velements import VElement, concat, cz_element, ope_element

TEMPLATES = ("hardC", "nondeg", "bfnnb", "efnnb")


@dataclass(frozen=True)
class FormatEntry:
    """One factor of a bound format.

    ``plain`` carries one label at an effective point; ``ope`` carries (A, B)
    and the cutoff ``delta``; ``cz`` carries one label. ``ope`` and ``cz``
    factors also own a virtual point.
    """

    kind: str
    labels: tuple[str, ...]
    delta: Real | None = None

    def __post_init__(self) -> None:
        want = {"plain": 1, "ope": 2, "cz": 1}
        if self.kind not in want:
            raise FormatError(f"unknown factor kind {self.kind!r}")
        if len(self.labels) != want[self.kind]:
            raise FormatError(f"{self.kind} factor needs {want[self.kind]} label(s)")
        if (self.kind == "ope") != (self.delta is not None):
            raise FormatError("delta is required for ope factors and only for them")

    @property
    def has_virtual(self) -> bool:
        return self.kind != "plain"


@dataclass(frozen=True)
class BoundFormat:
    """Format of an EFNNB instance.

    Configurations list the effective points x_1..x_N (one per entry) and
    then the virtual points y_i of the ope/cz entries in entry order.
    ``roles``, when given, must spell out that layout.
    """

    entries: tuple[FormatEntry, ...]
    roles: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        expected = self.expected_roles()
        if self.roles is not None and tuple(self.roles) != expected:
            for i, (got, want) in enumerate(zip(self.roles, expected)):
                if got != want:
                    raise FormatError(f"point {i} is declared {got} but the format makes it {want}")
            raise FormatError(f"format has {len(expected)} points, roles list {len(self.roles)}")

    def expected_roles(self) -> tuple[str, ...]:
        n_virtual = sum(e.has_virtual for e in self.entries)
        return ("effective",) * len(self.entries) + ("virtual",) * n_virtual

    @property
    def n_points(self) -> int:
        return len(self.expected_roles())

    @classmethod
    def plain(cls, labels: Sequence[str]) -> "BoundFormat":
        return cls(tuple(FormatEntry("plain", (str(lab),)) for lab in labels))


@dataclass(frozen=True)
class BoundRow:
    lhs: float
    rhs: float
    ratio: float
    passed: bool
    indicator: bool = True


@dataclass
class BoundReport:
    template: str
    params: BoundParams
    format: str
    rows: list[BoundRow] = field(default_factory=list)

    @property
    def max_ratio(self) -> float:
        active = [r.ratio for r in self.rows if r.indicator]
        return max(active) if active else 0.0

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def calibrated_K(self) -> float:
        """Smallest K for which every sampled configuration passes."""
        return self.params.K * self.max_ratio

    def to_dict(self) -> dict:
        return {
            "template": self.template,
            "format": self.format,
            "params": self.params.to_dict(),
            "rows": [
                {"lhs": r.lhs, "rhs": r.rhs, "ratio": r.ratio, "pass": r.passed, "indicator": r.indicator}
                for r in self.rows
            ],
            "max_ratio": self.max_ratio,
            "calibrated_K": self.calibrated_K(),
            "pass": self.passed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _bracket(x: np.ndarray) -> np.ndarray:
    """<x> = sqrt(1 + |x|^2) row-wise."""
    return np.sqrt(1.0 + np.sum(np.atleast_2d(x) ** 2, axis=-1))


def _nn(points: np.ndarray) -> np.ndarray:
    return PointConfiguration(points).nn_distances()


def _row(lhs: float, rhs: float, lower_bound: bool = False) -> BoundRow:
    if lower_bound:
        # rhs is the required lower bound, lhs the kernel value
        ratio = rhs / lhs if lhs > 0 else float("inf")
    else:
        ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else float("inf"))
    return BoundRow(float(lhs), float(rhs), float(ratio), bool(ratio <= 1.0))


def _channel_triple(structure: OpeStructure, fmt) -> tuple[Label, Label, Label]:
    if isinstance(fmt, BoundFormat) or len(fmt) != 3:
        raise FormatError("hardC/nondeg formats are label triples (A, B, C)")
    return tuple(structure.label(x) for x in fmt)  # type: ignore[return-value]


def _efnnb_element(structure: OpeStructure, fmt: BoundFormat) -> tuple[VElement, list[int]]:
    """Concatenated element in (y_1, x_1, ..., x_plain...) order, plus the point permutation."""
    n_eff = len(fmt.entries)
    elem: VElement | None = None
    order: list[int] = []
    v = n_eff
    for i, entry in enumerate(fmt.entries):
        if entry.kind == "ope":
            piece = ope_element(structure, entry.labels[0], entry.labels[1], entry.delta)
            order += [v, i]
            v += 1
        elif entry.kind == "cz":
            piece = cz_element(structure, entry.labels[0])
            order += [v, i]
            v += 1
        else:
            piece = VElement.basis(structure.label(entry.labels[0]))
            order.append(i)
        elem = piece if elem is None else concat(elem, piece)
    assert elem is not None
    return elem, order


def check_bound(
    template: str,
    structure: OpeStructure,
    system: CorrelationSystem | None,
    fmt,
    configs: Iterable,
    params: BoundParams | None = None,
) -> BoundReport:
    """Evaluate both sides of a bound template on every configuration."""
    if template not in TEMPLATES:
        raise ValueError(f"unknown template {template!r}")
    params = params or structure.bound_params
    eps, k, K = params.epsilon, params.k, params.K
    report = BoundReport(template, params, _format_name(fmt))

    if template in ("hardC", "nondeg"):
        a, b, c = _channel_triple(structure, fmt)
        kern = structure.coefficient(a, b, c)
        expo = float(a.dim) + float(b.dim) - float(c.dim)
        for cfg in configs:
            pts = as_points(cfg)
            if pts.shape[0] != 2:
                raise FormatError("coefficient bounds take two-point configurations")
            PointConfiguration(pts)
            dist = float(np.linalg.norm(pts[0] - pts[1]))
            weight = float(np.prod(_bracket(pts) ** k))
            val = kern(pts[0], pts[1])
            if template == "hardC":
                report.rows.append(_row(abs(val), K * dist ** (-(expo + eps)) * weight))
            else:
                report.rows.append(_row(val, dist ** (-(expo - eps)) / (K * weight), lower_bound=True))
        return report

    if system is None:
        raise ValueError("correlation bounds need a correlation system")
    if template == "bfnnb":
        if not isinstance(fmt, BoundFormat):
            fmt = BoundFormat.plain(fmt)
        if any(e.kind != "plain" for e in fmt.entries):
            raise FormatError("bfnnb formats contain plain factors only")
    if not isinstance(fmt, BoundFormat):
        raise FormatError("efnnb needs a BoundFormat")
    elem, order = _efnnb_element(structure, fmt)
    n_eff = len(fmt.entries)
    for cfg in configs:
        pts = as_points(cfg)
        if pts.shape[0] != fmt.n_points:
            raise FormatError(f"format expects {fmt.n_points} points, configuration has {pts.shape[0]}")
        PointConfiguration(pts)
        xs = pts[:n_eff]
        nn = _nn(xs) if n_eff > 1 else np.array([np.inf])
        rhs = K * float(np.prod(_bracket(pts) ** k))
        indicator = True
        v = n_eff
        for i, entry in enumerate(fmt.entries):
            if entry.kind == "plain":
                rhs *= nn[i] ** (-float(structure.label(entry.labels[0]).dim) - eps)
                continue
            gap = float(np.linalg.norm(pts[v] - xs[i]))
            v += 1
            if gap > params.eta * nn[i]:
                indicator = False
            if entry.kind == "ope":
                la, lb = (structure.label(x) for x in entry.labels)
                delta = float(entry.delta)
                rhs *= gap ** (delta + params.gamma - float(la.dim) - float(lb.dim))
                rhs *= nn[i] ** (-delta - params.gamma - eps)
            else:
                lc = structure.label(entry.labels[0])
                rhs *= gap**params.gamma * nn[i] ** (-float(lc.dim) - params.gamma - eps)
        if not indicator:
            report.rows.append(BoundRow(0.0, float(rhs), 0.0, True, indicator=False))
            continue
        lhs = abs(elem.evaluate(system, pts[order]))
        report.rows.append(_row(lhs, rhs))
    return report


def _format_name(fmt) -> str:
    if isinstance(fmt, BoundFormat):
        parts = []
        for e in fmt.entries:
            if e.kind == "ope":
                parts.append(f"OPE[{e.labels[0]},{e.labels[1]};{e.delta}]")
            elif e.kind == "cz":
                parts.append(f"CZ[{e.labels[0]}]")
            else:
                parts.append(e.labels[0])
        return " ".join(parts)
    return " ".join(str(x) for x in fmt)


def worst_case(reports: Sequence[BoundReport]) -> dict:
    """Consolidate several formats: one K (the largest calibration) for all."""
    return {
        "formats": [r.format for r in reports],
        "max_ratio": max((r.max_ratio for r in reports), default=0.0),
        "K": max((r.calibrated_K() for r in reports), default=0.0),
        "pass": all(r.passed for r in reports),
    }


def free_field_bfnnb_constant(system, labels: Sequence[Label | str], epsilon: float = 0.0, diameter: float = 1.0) -> float:
    """A K for which the free-field BFNNB holds with k = 0.

    Every matched pair obeys |x_i - x_j| >= sqrt(nn_i nn_j), so each matching
    is bounded by kappa^{legs/2} prod nn_i^{-[B_i]}; an epsilon > 0 costs at
    most diameter^{epsilon p} for configurations of diameter >= 1.
    """
    labs = [system.structure.label(lab) for lab in labels]
    powers = [system.power(lab) for lab in labs if not lab.is_identity]
    if sum(powers) % 2:
        return 0.0
    ones = PointConfiguration(np.arange(len(powers), dtype=float)[:, None])
    counts = system.leg_matrix(powers, ones) > 0
    from .. import kernels

    n_match = float(kernels.hafnian_batch(counts.astype(float)[None])[0]) if powers else 1.0
    return n_match * system.kappa ** (sum(powers) / 2) * max(1.0, diameter) ** (epsilon * len(powers))
