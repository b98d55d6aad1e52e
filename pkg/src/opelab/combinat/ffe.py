"""Fixed-point-free endofunctions, hairy-cycle decompositions and integration schedules.

Vertices are 0-based integers throughout.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np

from .. import kernels
from ..errors import ScheduleError, SizeError


@dataclass(frozen=True)
class Endofunction:
    """tau: [p] -> [p] with tau(i) != i."""

    map: tuple[int, ...]

    def __post_init__(self) -> None:
        m = tuple(int(v) for v in self.map)
        object.__setattr__(self, "map", m)
        p = len(m)
        for i, v in enumerate(m):
            if not 0 <= v < p:
                raise ValueError(f"tau({i}) = {v} is outside [0, {p})")
            if v == i:
                raise ValueError(f"tau has a fixed point at {i}")

    @property
    def p(self) -> int:
        return len(self.map)

    def __call__(self, i: int) -> int:
        return self.map[i]

    def __len__(self) -> int:
        return len(self.map)

    @classmethod
    def from_one_based(cls, values: Sequence[int]) -> "Endofunction":
        return cls(tuple(int(v) - 1 for v in values))

    def one_based(self) -> tuple[int, ...]:
        return tuple(v + 1 for v in self.map)


def enumerate_ffe(p: int) -> list[Endofunction]:
    """All (p-1)^p fixed-point-free endofunctions of [p], in lexicographic order."""
    if p < 2:
        raise SizeError("fixed-point-free endofunctions need p >= 2")
    choices = [[j for j in range(p) if j != i] for i in range(p)]
    return [Endofunction(m) for m in itertools.product(*choices)]


def count_ffe(p: int) -> int:
    if p < 2:
        raise SizeError("fixed-point-free endofunctions need p >= 2")
    return (p - 1) ** p


def nn_endofunction(points) -> Endofunction:
    """Nearest-neighbour map of a configuration, ties to the lowest index."""
    pts = np.asarray(getattr(points, "points", points), dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if len(pts) < 2:
        raise SizeError("nearest neighbours need at least two points")
    return Endofunction(tuple(kernels.nn_map_batch(np.ascontiguousarray(pts[None]))[0]))


def nn_indicator(points, tau: Endofunction) -> bool:
    """prod_i 1{|x_i - x_tau(i)| = min_{j != i} |x_i - x_j|}."""
    pts = np.asarray(getattr(points, "points", points), dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    dist = np.sqrt(np.sum((pts[:, None] - pts[None]) ** 2, axis=-1))
    np.fill_diagonal(dist, np.inf)
    nn = dist.min(axis=1)
    return bool(all(dist[i, tau(i)] == nn[i] for i in range(len(pts))))


def certificate_count(points) -> int:
    """Number of endofunctions whose indicator product is 1, by brute force."""
    pts = np.asarray(getattr(points, "points", points), dtype=float)
    return sum(nn_indicator(pts, tau) for tau in enumerate_ffe(len(pts)))


@dataclass(frozen=True)
class HairyComponent:
    """One connected component of the functional graph of tau.

    ``cycle`` runs along tau starting from its lowest vertex; ``succ`` is
    tau restricted to the component.
    """

    cycle: tuple[int, ...]
    vertices: frozenset[int]
    succ: dict

    @property
    def hair(self) -> frozenset[int]:
        return self.vertices - set(self.cycle)

    def edges(self) -> list[tuple[int, int]]:
        return [(v, self.succ[v]) for v in sorted(self.vertices)]

    def path_to_cycle(self, v: int) -> list[int]:
        out = [v]
        on_cycle = set(self.cycle)
        while out[-1] not in on_cycle:
            out.append(self.succ[out[-1]])
        return out


@dataclass(frozen=True)
class HairyCycleDecomposition:
    components: tuple[HairyComponent, ...]

    def __len__(self) -> int:
        return len(self.components)

    def component_of(self, v: int) -> HairyComponent:
        for comp in self.components:
            if v in comp.vertices:
                return comp
        raise ScheduleError(f"vertex {v} is in no component")


def _functional_components(succ: dict) -> list[HairyComponent]:
    """Hairy cycles of a fixed-point-free map given as a dict."""
    verts = sorted(succ)
    parent = {v: v for v in verts}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for v in verts:
        a, b = find(v), find(succ[v])
        if a != b:
            parent[max(a, b)] = min(a, b)
    groups: dict = {}
    for v in verts:
        groups.setdefault(find(v), []).append(v)
    comps = []
    for members in groups.values():
        # iterating |members| times from any vertex lands on the cycle
        v = members[0]
        for _ in range(len(members)):
            v = succ[v]
        cyc = [v]
        w = succ[v]
        while w != v:
            cyc.append(w)
            w = succ[w]
        start = cyc.index(min(cyc))
        cyc = cyc[start:] + cyc[:start]
        comps.append(HairyComponent(tuple(cyc), frozenset(members), {u: succ[u] for u in members}))
    comps.sort(key=lambda c: min(c.vertices))
    return comps


def hairy_decompose(tau: Endofunction) -> HairyCycleDecomposition:
    """Split the functional graph of tau into hairy cycles."""
    return HairyCycleDecomposition(tuple(_functional_components(dict(enumerate(tau.map)))))


def _degrees(edges: Iterable[tuple]) -> Counter:
    deg: Counter = Counter()
    for a, b in edges:
        deg[a] += 1
        deg[b] += 1
    return deg


def integration_schedule(component: HairyComponent, root: int, contrarian: bool = False) -> list[tuple[int, str]]:
    """Order in which the integration lemmas remove the vertices of one hairy cycle.

    Hair outside the protected set (the cycle plus the path from the root to
    the cycle) goes first, lowest-index leaf first. The cycle is then opened
    by a beta step at its lowest vertex other than the point where the root
    path lands, the remaining tree is peeled, and the root comes last.
    Without ``contrarian`` the root must sit on the cycle.
    """
    if root not in component.vertices:
        raise ScheduleError(f"root {root} is not in the component")
    if not contrarian and root not in component.cycle:
        raise ScheduleError("the root must lie on the cycle unless contrarian=True")
    path = component.path_to_cycle(root)
    touch = path[-1]
    protected = set(component.cycle) | set(path)
    edges = Counter(component.edges())
    alive = set(component.vertices)
    steps: list[tuple[int, str]] = []

    def degree(v):
        return sum(n for (a, b), n in edges.items() if v in (a, b) and a in alive and b in alive)

    def remove(v, rule):
        steps.append((v, rule))
        alive.discard(v)

    def peel(skip):
        while True:
            leaves = [v for v in sorted(alive) if v not in skip and degree(v) == 1]
            if not leaves:
                return
            remove(leaves[0], "L1")

    peel(protected)
    opener = min(v for v in component.cycle if v != touch)
    remove(opener, "beta")
    peel({root})
    remove(root, "L1")
    if alive:
        raise ScheduleError("schedule left vertices behind")
    return steps


def check_schedule(edges: Sequence[tuple[Hashable, Hashable]], steps: Sequence[tuple[Hashable, str]], limits=None) -> tuple[bool, str]:
    """Validity of an integration order, without integrating.

    ``limits`` maps a rule to the allowed numbers of unresolved edges at the
    removed vertex. The default suits hairy-cycle schedules: L1 steps see one
    edge (none for the final vertex) and beta steps see two.
    """
    limits = limits or {"L1": {0, 1}, "beta": {2}}
    remaining = list(edges)
    vertices = {v for e in edges for v in e} | {v for v, _ in steps}
    seen = set()
    for k, (v, rule) in enumerate(steps):
        if v in seen:
            return False, f"vertex {v} removed twice"
        seen.add(v)
        inc = [e for e in remaining if v in e]
        if rule not in limits:
            return False, f"unknown rule {rule!r}"
        if len(inc) not in limits[rule]:
            return False, f"step {k}: vertex {v} has {len(inc)} unresolved edges for rule {rule}"
        if len(inc) == 0 and k != len(steps) - 1 and rule in ("L1",):
            return False, f"step {k}: vertex {v} is isolated before the end"
        remaining = [e for e in remaining if v not in e]
    if seen != vertices:
        return False, f"vertices never removed: {sorted(vertices - seen)}"
    if remaining:
        return False, "edges remain after the last step"
    return True, "ok"


def all_schedules(tau: Endofunction, contrarian: bool = True) -> list[tuple[HairyComponent, int, list[tuple[int, str]]]]:
    """Schedules for every component and every admissible root."""
    out = []
    for comp in hairy_decompose(tau).components:
        roots = sorted(comp.vertices) if contrarian else sorted(comp.cycle)
        for root in roots:
            out.append((comp, root, integration_schedule(comp, root, contrarian=contrarian)))
    return out


__all__ = [
    "Endofunction",
    "HairyComponent",
    "HairyCycleDecomposition",
    "all_schedules",
    "certificate_count",
    "check_schedule",
    "count_ffe",
    "enumerate_ffe",
    "hairy_decompose",
    "integration_schedule",
    "nn_endofunction",
    "nn_indicator",
]
