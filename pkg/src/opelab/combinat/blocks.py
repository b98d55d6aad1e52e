"""Decompositions of index sets and the vertex block table of a bounded term.

Indices are 1-based: [m] holds the renormalized products and m+1..n the
spectators. A vertex is a pair (i, "X") or (i, "Y").
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Sequence

from ..errors import FormatError

Vertex = tuple[int, str]

BLOCKS = ("X1G", "X2G", "Y1BOO", "X1BOO", "X1BCO", "Y2BY", "X2BY", "X2BX", "X34G", "X34B")
VIRTUAL_BLOCKS = frozenset({"X2BY"})


@dataclass(frozen=True)
class Decomposition:
    """Ordered tuple of disjoint subsets covering ``ground``; empty parts allowed."""

    parts: tuple[frozenset, ...]

    def __post_init__(self) -> None:
        parts = tuple(frozenset(p) for p in self.parts)
        object.__setattr__(self, "parts", parts)
        seen: set = set()
        for p in parts:
            if seen & p:
                raise FormatError("decomposition parts overlap")
            seen |= p

    @property
    def ground(self) -> frozenset:
        return frozenset().union(*self.parts) if self.parts else frozenset()

    def __getitem__(self, k: int) -> frozenset:
        return self.parts[k]

    def __len__(self) -> int:
        return len(self.parts)

    @classmethod
    def of(cls, *parts: Iterable) -> "Decomposition":
        return cls(tuple(frozenset(p) for p in parts))


def enumerate_decompositions(ground: Iterable, parts: int) -> list[Decomposition]:
    """All parts^|ground| decompositions, lexicographic in the part assigned to each element."""
    if parts < 1:
        raise ValueError("parts must be at least 1")
    elems = sorted(ground)
    out = []
    for assign in itertools.product(range(parts), repeat=len(elems)):
        buckets: list[list] = [[] for _ in range(parts)]
        for e, k in zip(elems, assign):
            buckets[k].append(e)
        out.append(Decomposition(tuple(frozenset(b) for b in buckets)))
    return out


def is_distinguished(dec: Decomposition, m: int) -> bool:
    """(I1, I2, I3) == (empty, empty, [m]), the term that is kept exactly."""
    return not dec[0] and not dec[1] and dec[2] == frozenset(range(1, m + 1))


@dataclass(frozen=True)
class FactorDims:
    """Scaling dimensions attached to one index.

    For i <= m: ``a``, ``b`` are the fused labels and ``delta`` = [C*_i].
    For spectators only ``a`` is used.
    """

    a: Fraction
    b: Fraction | None = None
    delta: Fraction | None = None


@dataclass(frozen=True)
class TermShape:
    """All the set-valued choices that index one bounded term."""

    m: int
    n: int
    i123: Decomposition
    i1: Decomposition
    i2: Decomposition
    bad34: frozenset = frozenset()

    def __post_init__(self) -> None:
        if not 0 <= self.m <= self.n:
            raise FormatError("need 0 <= m <= n")
        if len(self.i123) != 3 or len(self.i1) != 3 or len(self.i2) != 3:
            raise FormatError("all decompositions have three parts")
        if self.i123.ground != frozenset(range(1, self.m + 1)):
            raise FormatError("(I1, I2, I3) must decompose [m]")
        if self.i1.ground != self.i123[0]:
            raise FormatError("(I1G, I1BOO, I1BCO) must decompose I1")
        if self.i2.ground != self.i123[1]:
            raise FormatError("(I2G, I2BY, I2BX) must decompose I2")
        if not frozenset(self.bad34) <= self.i34:
            raise FormatError("bad spectators must come from I3 and I4")
        object.__setattr__(self, "bad34", frozenset(self.bad34))

    @property
    def i3(self) -> frozenset:
        return self.i123[2]

    @property
    def i4(self) -> frozenset:
        return frozenset(range(self.m + 1, self.n + 1))

    @property
    def i34(self) -> frozenset:
        return self.i3 | self.i4

    @property
    def good(self) -> frozenset:
        return self.i1[0] | self.i2[0] | (self.i34 - self.bad34)

    @property
    def bad(self) -> frozenset:
        return frozenset(range(1, self.n + 1)) - self.good


def enumerate_shapes(m: int, n: int, include_distinguished: bool = False) -> Iterator[TermShape]:
    for dec in enumerate_decompositions(range(1, m + 1), 3):
        if not include_distinguished and is_distinguished(dec, m):
            continue
        i34 = dec[2] | frozenset(range(m + 1, n + 1))
        for d1 in enumerate_decompositions(dec[0], 3):
            for d2 in enumerate_decompositions(dec[1], 3):
                for k in range(len(i34) + 1):
                    for bad in itertools.combinations(sorted(i34), k):
                        yield TermShape(m, n, dec, d1, d2, frozenset(bad))


@dataclass
class BlockTable:
    """Vertices of a term with their block, status, exponent and involution."""

    shape: TermShape
    vertices: list[Vertex]
    block: dict[Vertex, str]
    status: dict[Vertex, str]
    beta: dict[Vertex, Fraction]
    iota: dict[Vertex, Vertex]
    dims: dict[int, FactorDims]
    channels: dict[int, Fraction]
    gamma: Fraction
    epsilon: Fraction
    d: int = 1

    def members(self, *blocks: str) -> list[Vertex]:
        return [v for v in self.vertices if self.block[v] in blocks]

    @property
    def VX(self) -> list[Vertex]:
        return [v for v in self.vertices if v[1] == "X"]

    @property
    def VY(self) -> list[Vertex]:
        return [v for v in self.vertices if v[1] == "Y"]

    @property
    def VG(self) -> list[Vertex]:
        return [v for v in self.vertices if v[0] in self.shape.good]

    @property
    def VB(self) -> list[Vertex]:
        return [v for v in self.vertices if v[0] in self.shape.bad]

    @property
    def VGX(self) -> list[Vertex]:
        return [v for v in self.VG if v[1] == "X"]

    @property
    def VBX(self) -> list[Vertex]:
        return [v for v in self.VB if v[1] == "X"]

    @property
    def VBY(self) -> list[Vertex]:
        return [v for v in self.VB if v[1] == "Y"]

    @property
    def effective(self) -> list[Vertex]:
        return [v for v in self.vertices if self.status[v] == "effective"]

    def dim_D(self, i: int) -> Fraction:
        """[D_i]: [C*_i] on I3, [A_i] on I4."""
        return self.dims[i].delta if i <= self.shape.m else self.dims[i].a

    def to_dict(self) -> dict:
        return {
            "vertices": [
                {
                    "vertex": f"{i}{s}",
                    "block": self.block[(i, s)],
                    "status": self.status[(i, s)],
                    "beta": str(self.beta[(i, s)]),
                    "iota": "{}{}".format(*self.iota[(i, s)]),
                }
                for i, s in self.vertices
            ]
        }


def build_block_table(
    shape: TermShape,
    dims: Mapping[int, FactorDims],
    gamma: Fraction,
    epsilon: Fraction,
    channels: Mapping[int, Fraction] | None = None,
    d: int = 1,
) -> BlockTable:
    """Assign every vertex its block, status and exponent beta_a.

    ``channels`` gives [C_i] for i in I1BCO.
    """
    channels = dict(channels or {})
    i1g, i1boo, i1bco = shape.i1.parts
    i2g, i2by, i2bx = shape.i2.parts
    if set(channels) != set(i1bco):
        raise FormatError("channel dimensions must be given exactly for I1BCO")
    for i in range(1, shape.n + 1):
        if i not in dims:
            raise FormatError(f"no dimensions for index {i}")
        if i <= shape.m and (dims[i].b is None or dims[i].delta is None):
            raise FormatError(f"index {i} needs [A], [B] and Delta")
    eps = Fraction(epsilon)
    g = Fraction(gamma)
    block: dict[Vertex, str] = {}
    beta: dict[Vertex, Fraction] = {}

    def put(v: Vertex, name: str, value) -> None:
        block[v] = name
        beta[v] = Fraction(value)

    for i in range(1, shape.n + 1):
        f = dims[i]
        if i in i1g:
            put((i, "X"), "X1G", f.delta + g + eps)
        elif i in i2g:
            put((i, "X"), "X2G", f.delta + g + eps)
        elif i in i1boo:
            put((i, "Y"), "Y1BOO", f.a + eps)
            put((i, "X"), "X1BOO", f.b + eps)
        elif i in i1bco:
            put((i, "X"), "X1BCO", Fraction(channels[i]) + eps)
        elif i in i2by:
            put((i, "Y"), "Y2BY", f.delta + eps)
            put((i, "X"), "X2BY", 0)
        elif i in i2bx:
            put((i, "X"), "X2BX", f.delta + eps)
        else:
            dim_d = f.delta if i <= shape.m else f.a
            put((i, "X"), "X34B" if i in shape.bad34 else "X34G", dim_d + eps)
    vertices = sorted(block)
    status = {v: ("virtual" if block[v] in VIRTUAL_BLOCKS else "effective") for v in vertices}
    iota = {}
    for i, s in vertices:
        paired = i in i1boo or i in i2by
        iota[(i, s)] = (i, "Y" if s == "X" else "X") if paired else (i, s)
    expected = shape.n + len(i1boo) + len(i2by)
    assert len(vertices) == expected
    return BlockTable(shape, vertices, block, status, beta, iota, dict(dims), channels, g, eps, d)


__all__ = [
    "BLOCKS",
    "BlockTable",
    "Decomposition",
    "FactorDims",
    "TermShape",
    "build_block_table",
    "enumerate_decompositions",
    "enumerate_shapes",
    "is_distinguished",
]
