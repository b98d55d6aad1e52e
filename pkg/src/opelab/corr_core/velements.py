"""The free modules V_n: finite sums of coefficient functions times label tuples."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .correlations import CorrelationSystem, eval_correlation
from .structure import IDENTITY, Kernel, Label, OpeStructure, Real

Coefficient = Callable[[np.ndarray], float]


def _one(points: np.ndarray) -> float:
    return 1.0


@dataclass(frozen=True)
class Term:
    coefficient: Coefficient
    labels: tuple[Label, ...]


@dataclass(frozen=True)
class VElement:
    """Element of V_n: sum_k c_k(x_1..x_n) O_{A_k1} x ... x O_{A_kn}."""

    arity: int
    terms: tuple[Term, ...]

    def __post_init__(self) -> None:
        for term in self.terms:
            if len(term.labels) != self.arity:
                raise ValueError("term label tuple length differs from the arity")

    @classmethod
    def basis(cls, *labels: Label) -> "VElement":
        return cls(len(labels), (Term(_one, tuple(labels)),))

    def __add__(self, other: "VElement") -> "VElement":
        if other.arity != self.arity:
            raise ValueError("cannot add elements of different arity")
        return VElement(self.arity, self.terms + other.terms)

    def scaled(self, factor: float) -> "VElement":
        return VElement(
            self.arity, tuple(Term(lambda p, c=t.coefficient: factor * c(p), t.labels) for t in self.terms)
        )

    def evaluate(
        self,
        system: CorrelationSystem,
        points,
        spectators: Sequence[tuple[Label | str, Sequence[float]]] = (),
    ) -> float:
        """<P(x_1..x_n) O_{B_1}(z_1) ... > with spectator insertions appended."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[0] != self.arity and pts.shape[1] == self.arity:
            pts = pts.T
        spec_labels = [lab for lab, _ in spectators]
        spec_pts = [np.atleast_1d(np.asarray(z, dtype=float)) for _, z in spectators]
        total = 0.0
        for term in self.terms:
            coeff = term.coefficient(pts)
            if coeff == 0.0:
                continue
            all_pts = np.vstack([pts] + [z[None, :] for z in spec_pts]) if spec_pts else pts
            total += coeff * eval_correlation(system, list(term.labels) + spec_labels, all_pts)
        return total


def concat(p: VElement, q: VElement) -> VElement:
    """P (x) Q on Conf_{m+n}: coefficients multiply over the split point tuple."""
    m = p.arity
    terms = []
    for tp in p.terms:
        for tq in q.terms:

            def coeff(points, cp=tp.coefficient, cq=tq.coefficient):
                return cp(points[:m]) * cq(points[m:])

            terms.append(Term(coeff, tp.labels + tq.labels))
    return VElement(m + q.arity, tuple(terms))


@dataclass(frozen=True)
class OpeElement(VElement):
    """O_A (x) O_B - sum_{C in A(Delta)} C_AB^C O_1 (x) O_C, with its channel list.

    Evaluated at (y, x) the subtraction sits at x. Zero channels are listed in
    ``channels`` but contribute no term.
    """

    channels: tuple[tuple[Label, Kernel], ...] = ()
    delta: Real = 0


def ope_element(structure: OpeStructure, a: Label | str, b: Label | str, delta: Real) -> OpeElement:
    la, lb = structure.label(a), structure.label(b)
    channels = tuple((c, structure.coefficient(la, lb, c)) for c in structure.channels(delta))
    terms = [Term(_one, (la, lb))]
    for c, kern in channels:
        if kern.is_zero:
            continue

        def coeff(points, kern=kern):
            return -kern(points[0], points[1])

        terms.append(Term(coeff, (IDENTITY, c)))
    return OpeElement(2, tuple(terms), channels, delta)


def cz_element(structure: OpeStructure, a: Label | str) -> VElement:
    """O_A (x) O_1 - O_1 (x) O_A; at (y, x) it is O_A(y) - O_A(x)."""
    la = structure.label(a)
    one = structure.identity

    def minus(points):
        return -1.0

    return VElement(2, (Term(_one, (la, one)), Term(minus, (one, la))))
