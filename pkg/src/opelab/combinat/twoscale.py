"""The (tau, sigma) two-scale graph and the integration plan it steers."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

import numpy as np

from .. import kernels
from ..errors import EmptyTerm
from .blocks import BlockTable
from .ffe import HairyComponent, _functional_components, check_schedule, integration_schedule

LOCAL_LIMITS = {
    "global_L1": {0, 1},
    "global_beta": {2},
    "local_L1": {1},
    "local_beta": {2},
}


@dataclass
class TauSigmaGraph:
    """tau on all vertices, sigma on the bad ones, and the checked indicators."""

    vertices: list
    tau: dict
    sigma: dict
    bad: frozenset
    r: float = 0.0
    delta: float = 4.0
    L: float = 2.0
    indicators: dict = field(default_factory=dict)
    blocks: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        vs = set(self.vertices)
        for a, b in self.tau.items():
            if a == b or b not in vs:
                raise ValueError(f"tau({a}) = {b} is not a fixed-point-free map into V")
        for a, b in self.sigma.items():
            if a == b or a not in self.bad or b not in self.bad:
                raise ValueError(f"sigma({a}) = {b} must map V_B into V_B without fixed points")
        if set(self.tau) != vs or set(self.sigma) != set(self.bad):
            raise ValueError("tau must be defined on V and sigma on V_B")

    @property
    def good(self) -> list:
        return [v for v in self.vertices if v not in self.bad]

    @property
    def claim_holds(self) -> bool:
        return bool(self.indicators) and all(self.indicators.values())

    def to_dot(self) -> str:
        """Graphviz text: vertices with block tags, solid tau edges, dashed sigma edges."""
        name = {v: _vname(v) for v in self.vertices}
        lines = ["digraph tausigma {"]
        for v in self.vertices:
            tag = self.blocks.get(v, "bad" if v in self.bad else "good")
            lines.append(f'  "{name[v]}" [label="{name[v]}\\n{tag}"];')
        for a in self.vertices:
            lines.append(f'  "{name[a]}" -> "{name[self.tau[a]]}" [style=solid, label="tau"];')
        for a in sorted(self.sigma, key=_key):
            lines.append(f'  "{name[a]}" -> "{name[self.sigma[a]]}" [style=dashed, label="sigma"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _vname(v) -> str:
    return f"{v[0]}{v[1]}" if isinstance(v, tuple) else str(v)


def _key(v):
    return v if isinstance(v, tuple) else (v,)


def _dist(points: Mapping, a, b) -> float:
    return float(np.linalg.norm(np.asarray(points[a], dtype=float) - np.asarray(points[b], dtype=float)))


def term_indicators(table: BlockTable, points: Mapping, delta: float, L: float, r: float) -> dict[str, bool]:
    """The indicators that restrict the term's integral to its configurations."""
    s = L**r
    vx = table.VX
    out = {}
    out["Y_near_partner"] = all(_dist(points, a, table.iota[a]) <= 2 * s for a in table.VBY)
    out["good_isolated"] = all(min((_dist(points, a, b) for b in vx if b != a), default=np.inf) > delta * s for a in table.VGX)
    out["bad_clustered"] = all(min((_dist(points, a, b) for b in vx if b != a), default=np.inf) <= delta * s for a in table.VBX)
    return out


def construct_tau_sigma(points: Mapping, table: BlockTable, delta: float = 4.0, L: float = 2.0, r: float = 0.0) -> TauSigmaGraph:
    """Nearest-neighbour tau and witness sigma for one configuration of the term.

    ``points`` maps each vertex of the table to its position. Raises EmptyTerm
    when the configuration is outside the term's support.
    """
    if delta < 4:
        raise ValueError("the construction needs delta >= 4")
    verts = list(table.vertices)
    missing = [v for v in verts if v not in points]
    if missing:
        raise ValueError(f"no position for vertices {missing}")
    pts = np.array([np.atleast_1d(np.asarray(points[v], dtype=float)) for v in verts])
    if len(verts) < 2:
        raise EmptyTerm("a single vertex has no nearest neighbour")
    dist = np.sqrt(np.sum((pts[:, None] - pts[None]) ** 2, axis=-1))
    if np.any(dist[~np.eye(len(verts), dtype=bool)] == 0):
        raise ValueError("configuration has coincident points")
    premise = term_indicators(table, points, delta, L, r)
    if not all(premise.values()):
        failed = ", ".join(k for k, v in premise.items() if not v)
        raise EmptyTerm(f"configuration is outside the support of the term ({failed})")
    s = L**r
    idx = {v: k for k, v in enumerate(verts)}
    nn = kernels.nn_map_batch(np.ascontiguousarray(pts[None]))[0]
    tau = {v: verts[int(nn[idx[v]])] for v in verts}
    sigma = {}
    vx = table.VX
    for a in table.VBY:
        sigma[a] = table.iota[a]
    for a in table.VBX:
        cands = sorted((dist[idx[a], idx[b]], idx[b]) for b in vx if b != a)
        sigma[a] = verts[cands[0][1]]
    bad = frozenset(table.VB)
    g = TauSigmaGraph(verts, tau, sigma, bad, r, delta, L, blocks=dict(table.block))
    g.indicators = verify_claim(g, points)
    return g


def verify_claim(g: TauSigmaGraph, points: Mapping) -> dict[str, bool]:
    """Evaluate the three indicator groups of the covering claim, plus tau(V_B) in V_B."""
    s = g.L**g.r
    verts = g.vertices
    nn_ok = True
    for a in verts:
        best = min(_dist(points, a, b) for b in verts if b != a)
        nn_ok &= _dist(points, a, g.tau[a]) == best
    return {
        "tau_nearest": bool(nn_ok),
        "sigma_short": all(_dist(points, a, g.sigma[a]) <= g.delta * s for a in g.bad),
        "tau_bad_short": all(_dist(points, a, g.tau[a]) <= g.delta * s for a in g.bad),
        "tau_bad_closed": all(g.tau[a] in g.bad for a in g.bad),
    }


@dataclass
class IntegrationPlan:
    steps: list[tuple[Hashable, str]]
    q: int
    components: list[list]
    subcomponents: list[list[list]]
    roots: list
    kept_sigma: list[tuple]
    edges: list[tuple]

    def lemma_counts(self) -> Counter:
        return Counter(rule for _, rule in self.steps)

    def to_dict(self) -> dict:
        return {
            "steps": [[_vname(v), rule] for v, rule in self.steps],
            "q": self.q,
            "components": [[_vname(v) for v in w] for w in self.components],
            "subcomponents": [[[_vname(v) for v in c] for c in w] for w in self.subcomponents],
            "roots": [_vname(v) for v in self.roots],
            "kept_sigma": [[_vname(a), _vname(b)] for a, b in self.kept_sigma],
        }


def _components(vertices: Sequence, edges: Sequence[tuple]) -> list[list]:
    parent = {v: v for v in vertices}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            lo, hi = sorted((ra, rb), key=_key)
            parent[hi] = lo
    groups: dict = {}
    for v in sorted(vertices, key=_key):
        groups.setdefault(find(v), []).append(v)
    return sorted(groups.values(), key=lambda c: _key(c[0]))


def _good_steps(g: TauSigmaGraph) -> list[tuple[Hashable, str]]:
    """Pin-and-sum over the good vertices: isolated hairy cycles or trees hanging on V_B."""
    good = g.good
    goodset = set(good)
    edges = [(a, g.tau[a]) for a in good]
    steps = []
    for comp in _components(good, [(a, b) for a, b in edges if b in goodset]):
        exits = [a for a in comp if g.tau[a] not in goodset]
        if not exits:
            hc = _functional_components({a: g.tau[a] for a in comp})[0]
            root = min(hc.cycle, key=_key)
            for v, rule in _generic_schedule(hc, root, contrarian=False):
                steps.append((v, "global_L1" if rule == "L1" else "global_beta"))
            continue
        if len(exits) != 1:
            raise AssertionError("a good component leaves towards V_B more than once")
        alive = set(comp)
        while alive:
            incoming = Counter(g.tau[a] for a in alive if g.tau[a] in alive)
            leaf = min((v for v in alive if incoming[v] == 0), key=_key)
            steps.append((leaf, "global_L1"))
            alive.discard(leaf)
    return steps


def _generic_schedule(hc: HairyComponent, root, contrarian: bool) -> list[tuple[Hashable, str]]:
    """integration_schedule for components whose vertices are arbitrary sortable ids."""
    order = sorted(hc.vertices, key=_key)
    to_int = {v: k for k, v in enumerate(order)}
    comp = HairyComponent(
        tuple(to_int[v] for v in hc.cycle),
        frozenset(to_int.values()),
        {to_int[a]: to_int[b] for a, b in hc.succ.items()},
    )
    return [(order[v], rule) for v, rule in integration_schedule(comp, to_int[root], contrarian=contrarian)]


def two_scale_schedule(g: TauSigmaGraph, table: BlockTable | None = None) -> IntegrationPlan:
    """Integration order with a lemma tag for every vertex.

    Good vertices go first with global lemmas. The bad part splits into
    tau-and-sigma components W_i and tau-components W_ij; sigma edges are
    pruned to a spanning tree between the W_ij (edges in sorted order,
    greedy). Each non-root W_ij is integrated with local lemmas before the
    W_ij it hangs from, rooted at the endpoint of its tree edge; W_i1 is
    rooted at its lowest vertex b_i, the only global step in W_i.
    """
    steps = _good_steps(g)
    bad = sorted(g.bad, key=_key)
    tau_b = [(a, g.tau[a]) for a in bad]
    sig_b = [(a, g.sigma[a]) for a in bad]
    W = _components(bad, tau_b + sig_b)
    all_subs, roots, kept = [], [], []
    bad_steps: list[list] = []
    for w in W:
        wset = set(w)
        subs = _components(w, [(a, b) for a, b in tau_b if a in wset])
        which = {v: k for k, c in enumerate(subs) for v in c}
        # spanning tree between tau-components, greedy over sorted sigma edges
        cand = sorted(
            {tuple(sorted((a, b), key=_key)) for a, b in sig_b if a in wset and which[a] != which[b]},
            key=lambda e: (_key(e[0]), _key(e[1])),
        )
        uf = list(range(len(subs)))

        def find(k):
            while uf[k] != k:
                uf[k] = uf[uf[k]]
                k = uf[k]
            return k

        tree = []
        for a, b in cand:
            ka, kb = find(which[a]), find(which[b])
            if ka != kb:
                uf[max(ka, kb)] = min(ka, kb)
                tree.append((a, b))
        kept += tree
        # orient the tree away from W_i1 and integrate leaves-first
        adj: dict[int, list] = {k: [] for k in range(len(subs))}
        for a, b in tree:
            adj[which[a]].append((which[b], a, b))
            adj[which[b]].append((which[a], b, a))
        attach = {0: None}
        order = [0]
        for k in order:
            for nb, here, there in sorted(adj[k], key=lambda t: (_key(t[1]), _key(t[2]))):
                if nb not in attach:
                    attach[nb] = there
                    order.append(nb)
        b_i = subs[0][0]
        roots.append(b_i)
        local: list = []
        for k in reversed(order):
            hc = _functional_components({a: g.tau[a] for a in subs[k]})[0]
            root = b_i if k == 0 else attach[k]
            for v, rule in _generic_schedule(hc, root, contrarian=True):
                if v == b_i:
                    local.append((v, "global_L1"))
                else:
                    local.append((v, "local_L1" if rule == "L1" else "local_beta"))
        bad_steps.append(local)
        all_subs.append(subs)
    # W_1 is integrated last
    for local in reversed(bad_steps):
        steps += local
    edges = [(a, g.tau[a]) for a in g.vertices] + kept
    return IntegrationPlan(steps, len(W), W, all_subs, roots, kept, edges)


def check_plan(plan: IntegrationPlan, g: TauSigmaGraph | None = None) -> tuple[bool, str]:
    """Edge-count validity of every step, and exactly q global steps on V_B."""
    ok, why = check_schedule(plan.edges, plan.steps, LOCAL_LIMITS)
    if not ok:
        return ok, why
    if g is not None:
        n_global_bad = sum(1 for v, rule in plan.steps if v in g.bad and rule.startswith("global"))
        if n_global_bad != plan.q:
            return False, f"{n_global_bad} global steps on V_B but q = {plan.q}"
        if any(v not in g.bad and rule.startswith("local") for v, rule in plan.steps):
            return False, "local lemma used on a good vertex"
    return True, "ok"


def sample_term_configuration(
    table: BlockTable,
    rng: np.random.Generator,
    delta: float = 4.0,
    L: float = 2.0,
    r: float = 0.0,
    d: int = 2,
    p_random: float = 0.2,
) -> dict:
    """Random positions that usually satisfy the term's support indicators.

    Bad X vertices are grouped into clusters of width delta L^r, good X
    vertices are spread far apart, and Y vertices sit within 2 L^r of their
    partners. With probability ``p_random`` all points are drawn uniformly in
    a small box instead, which mostly produces empty terms.
    """
    s = L**r
    verts = table.vertices
    if rng.random() < p_random:
        box = 3 * delta * s
        return {v: rng.uniform(-box, box, d) for v in verts}
    far = 50 * delta * s * (len(verts) + 1)

    def ball(radius):
        u = rng.standard_normal(d)
        return u / np.linalg.norm(u) * radius * rng.random() ** (1 / d)

    pos: dict = {}
    bx = list(table.VBX)
    rng.shuffle(bx)
    n_clusters = max(1, len(bx) // 2)
    groups = [bx[k::n_clusters] for k in range(n_clusters)]
    centres = []

    def new_centre():
        while True:
            c = rng.uniform(-far, far, d)
            if all(np.linalg.norm(c - o) > 10 * delta * s for o in centres):
                centres.append(c)
                return c

    for grp in groups:
        c = new_centre()
        for v in grp:
            pos[v] = c + ball(0.5 * delta * s)
    for v in table.VGX:
        pos[v] = new_centre()
    for v in table.VY:
        pos[v] = pos[table.iota[v]] + ball(2 * s)
    return pos


__all__ = [
    "IntegrationPlan",
    "LOCAL_LIMITS",
    "TauSigmaGraph",
    "check_plan",
    "construct_tau_sigma",
    "sample_term_configuration",
    "term_indicators",
    "two_scale_schedule",
    "verify_claim",
]
