"""Endofunctions, schedules, block tables, the two-scale graph and power counting."""

import itertools
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from opelab.combinat import (
    LOCAL_LIMITS,
    Decomposition,
    Endofunction,
    FactorDims,
    TauSigmaGraph,
    TermShape,
    all_schedules,
    alpha_total,
    build_block_table,
    build_ledger,
    certificate_count,
    check_plan,
    check_schedule,
    claim_suite,
    construct_tau_sigma,
    count_ffe,
    enumerate_decompositions,
    enumerate_ffe,
    enumerate_shapes,
    exhaustive_check,
    hairy_decompose,
    integration_schedule,
    is_distinguished,
    max_components,
    nn_endofunction,
    nn_indicator,
    nu,
    pinsum_suite,
    sample_term_configuration,
    two_scale_schedule,
)
from opelab.errors import EmptyTerm, FormatError, LedgerError, ScheduleError, SizeError

F = Fraction


@st.composite
def endofunctions(draw, max_p=7):
    p = draw(st.integers(2, max_p))
    vals = [draw(st.integers(0, p - 2)) for _ in range(p)]
    # shift past i to avoid fixed points
    return Endofunction(tuple(v + (v >= i) for i, v in enumerate(vals)))


def orbit_cycle(tau, v):
    """Brute-force iteration: the cycle eventually reached from v."""
    seen = []
    while v not in seen:
        seen.append(v)
        v = tau(v)
    return set(seen[seen.index(v) :])


# --- endofunctions -----------------------------------------------------------


@pytest.mark.parametrize("p, count", [(2, 1), (3, 8), (4, 81), (5, 1024), (6, 15625)])
def test_ffe_counts(p, count):
    listed = enumerate_ffe(p)
    assert len(listed) == count == count_ffe(p)
    assert len(set(listed)) == count
    assert [t.map for t in listed] == sorted(t.map for t in listed)


def test_ffe_size_error():
    for p in (0, 1):
        with pytest.raises(SizeError):
            enumerate_ffe(p)


def test_endofunction_validation():
    with pytest.raises(ValueError):
        Endofunction((0, 0))
    with pytest.raises(ValueError):
        Endofunction((1, 2))
    assert Endofunction.from_one_based((2, 1)).map == (1, 0)


def test_nearest_neighbour_collinear():
    tau = nn_endofunction(np.array([0.0, 1.0, 3.0]))
    assert tau.one_based() == (2, 1, 2)
    assert nn_indicator(np.array([0.0, 1.0, 3.0]), tau)
    assert not nn_indicator(np.array([0.0, 1.0, 3.0]), Endofunction.from_one_based((3, 1, 2)))


def test_nearest_neighbour_tie_lowest_index():
    assert nn_endofunction(np.array([0.0, -1.0, 1.0])).map == (1, 0, 0)


@given(st.integers(2, 5), st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_certificate_exists(n, d, seed):
    pts = np.random.default_rng(seed).uniform(-1, 1, (n, d))
    assert nn_indicator(pts, nn_endofunction(pts))
    assert certificate_count(pts) >= 1


# --- hairy cycles ------------------------------------------------------------


def test_hairy_two_cycle():
    comps = hairy_decompose(Endofunction.from_one_based((2, 1))).components
    assert len(comps) == 1
    assert set(comps[0].cycle) == {0, 1} and not comps[0].hair


def test_hairy_with_hair():
    (comp,) = hairy_decompose(Endofunction.from_one_based((2, 3, 2))).components
    assert set(comp.cycle) == {1, 2}
    assert comp.hair == {0}
    assert comp.path_to_cycle(0) == [0, 1]


def test_hairy_two_components():
    assert len(hairy_decompose(Endofunction.from_one_based((2, 1, 4, 3)))) == 2


@given(endofunctions())
def test_hairy_decomposition_invariants(tau):
    comps = hairy_decompose(tau).components
    assert sorted(v for c in comps for v in c.vertices) == list(range(tau.p))
    cycles = set()
    for c in comps:
        assert len(c.cycle) >= 2
        for a, b in zip(c.cycle, c.cycle[1:] + c.cycle[:1]):
            assert tau(a) == b
        for v in c.vertices:
            assert orbit_cycle(tau, v) == set(c.cycle)
        cycles |= set(c.cycle)
    # vertices visited infinitely often are exactly the cycle vertices
    recurrent = {v for v in range(tau.p) if v in orbit_cycle(tau, v)}
    assert recurrent == cycles


# --- schedules ---------------------------------------------------------------


def test_schedule_root_on_cycle():
    (comp,) = hairy_decompose(Endofunction.from_one_based((2, 3, 2))).components
    steps = integration_schedule(comp, 1)
    assert [(v + 1, rule) for v, rule in steps] == [(1, "L1"), (3, "beta"), (2, "L1")]
    assert check_schedule(comp.edges(), steps) == (True, "ok")


def test_schedule_contrarian_root_in_hair():
    (comp,) = hairy_decompose(Endofunction.from_one_based((2, 3, 2))).components
    with pytest.raises(ScheduleError):
        integration_schedule(comp, 0)
    steps = integration_schedule(comp, 0, contrarian=True)
    assert steps[-1] == (0, "L1")
    assert steps[0] == (2, "beta")
    assert check_schedule(comp.edges(), steps)[0]


def test_schedule_single_two_cycle():
    (comp,) = hairy_decompose(Endofunction.from_one_based((2, 1))).components
    steps = integration_schedule(comp, 0)
    assert steps == [(1, "beta"), (0, "L1")]


def test_schedule_bad_root():
    (comp,) = hairy_decompose(Endofunction.from_one_based((2, 1, 4, 3))).components[:1]
    with pytest.raises(ScheduleError):
        integration_schedule(comp, 3)


def test_check_schedule_rejects():
    edges = [(0, 1), (1, 0)]
    assert not check_schedule(edges, [(0, "L1"), (1, "L1")])[0]
    assert not check_schedule(edges, [(1, "beta")])[0]
    assert not check_schedule(edges, [(1, "beta"), (1, "L1")])[0]
    assert not check_schedule(edges, [(1, "gamma"), (0, "L1")])[0]


@given(endofunctions())
def test_every_schedule_is_valid(tau):
    scheds = all_schedules(tau, contrarian=True)
    assert len(scheds) == tau.p
    for comp, root, steps in scheds:
        assert steps[-1] == (root, "L1")
        assert sum(rule == "beta" for _, rule in steps) == 1
        assert check_schedule(comp.edges(), steps) == (True, "ok")


# --- decompositions and block tables -----------------------------------------


def test_decomposition_counts():
    assert len(enumerate_decompositions({1, 2}, 3)) == 9
    assert len(enumerate_decompositions(set(), 3)) == 1
    for m in range(4):
        kept = [dec for dec in enumerate_decompositions(range(1, m + 1), 3) if not is_distinguished(dec, m)]
        assert len(kept) == 3**m - 1


@given(st.integers(0, 5), st.integers(1, 4))
def test_decompositions_cover(size, parts):
    decs = enumerate_decompositions(range(size), parts)
    assert len(decs) == parts**size
    assert len(set(decs)) == len(decs)
    for dec in decs:
        assert dec.ground == frozenset(range(size))


def test_decomposition_overlap():
    with pytest.raises(FormatError):
        Decomposition.of({1}, {1, 2})


def _shape(m, n, i123, i1=((), (), ()), i2=((), (), ()), bad34=()):
    return TermShape(m, n, Decomposition.of(*i123), Decomposition.of(*i1), Decomposition.of(*i2), frozenset(bad34))


DIMS = {i: FactorDims(F(1, 5), F(1, 5), F(2, 5)) for i in range(1, 4)}


def test_block_2by_rows():
    shape = _shape(1, 1, ((), {1}, ()), i2=((), {1}, ()))
    t = build_block_table(shape, DIMS, F(3, 10), F(1, 100))
    assert t.block[(1, "Y")] == "Y2BY" and t.status[(1, "Y")] == "effective"
    assert t.beta[(1, "Y")] == F(2, 5) + F(1, 100)
    assert t.block[(1, "X")] == "X2BY" and t.status[(1, "X")] == "virtual"
    assert t.beta[(1, "X")] == 0
    assert t.iota[(1, "X")] == (1, "Y") and t.iota[(1, "Y")] == (1, "X")


def test_block_1boo_rows():
    dims = {1: FactorDims(F(1, 10), F(3, 10), F(2, 5))}
    shape = _shape(1, 1, ({1}, (), ()), i1=((), {1}, ()))
    t = build_block_table(shape, dims, F(3, 10), F(1, 100))
    assert t.beta[(1, "Y")] == F(11, 100) and t.beta[(1, "X")] == F(31, 100)
    assert t.status[(1, "X")] == t.status[(1, "Y")] == "effective"


def test_block_spectators_only():
    dims = {1: FactorDims(F(1, 5)), 2: FactorDims(F(2, 5))}
    t = build_block_table(_shape(0, 2, ((), (), ())), dims, F(3, 10), F(1, 100))
    assert t.vertices == [(1, "X"), (2, "X")]
    assert [t.beta[v] for v in t.vertices] == [F(21, 100), F(41, 100)]
    assert set(t.status.values()) == {"effective"}
    assert all(t.iota[v] == v for v in t.vertices)


def test_block_table_errors():
    shape = _shape(1, 1, ({1}, (), ()), i1=((), (), {1}))
    with pytest.raises(FormatError):
        build_block_table(shape, DIMS, F(3, 10), F(1, 100))
    with pytest.raises(FormatError):
        _shape(1, 1, ({1}, (), ()))
    with pytest.raises(FormatError):
        build_block_table(_shape(0, 1, ((), (), ())), {}, F(3, 10), F(1, 100))


@pytest.mark.parametrize("m, n", [(1, 2), (2, 2), (2, 3), (3, 3)])
def test_block_table_sizes_and_involution(m, n):
    for shape in itertools.islice(enumerate_shapes(m, n), 400):
        chans = {i: F(0) for i in shape.i1[2]}
        t = build_block_table(shape, DIMS, F(3, 10), F(1, 100), chans)
        assert len(t.vertices) == n + len(shape.i1[1]) + len(shape.i2[1])
        paired = shape.i1[1] | shape.i2[1]
        for v in t.vertices:
            assert t.iota[t.iota[v]] == v
            assert (t.iota[v] == v) == (v[0] not in paired)


# --- two-scale graph ---------------------------------------------------------


def _spectator_table(n, bad):
    dims = {i: FactorDims(F(1, 5)) for i in range(1, n + 1)}
    return build_block_table(_shape(0, n, ((), (), ()), bad34=bad), dims, F(3, 10), F(1, 100), d=2)


def test_two_bad_vertices_swap():
    r = -3.0
    s = 2.0**r
    table = _spectator_table(3, {1, 2})
    pts = {(1, "X"): np.array([0.0, 0.0]), (2, "X"): np.array([0.1 * s, 0.0]), (3, "X"): np.array([40 * 4 * s, 0.0])}
    g = construct_tau_sigma(pts, table, 4.0, 2.0, r)
    assert g.sigma == {(1, "X"): (2, "X"), (2, "X"): (1, "X")}
    assert g.claim_holds
    plan = two_scale_schedule(g, table)
    assert plan.q == 1
    assert plan.steps == [((3, "X"), "global_L1"), ((2, "X"), "local_beta"), ((1, "X"), "global_L1")]
    assert check_plan(plan, g) == (True, "ok")


def test_empty_term_when_bad_vertex_is_isolated():
    table = _spectator_table(3, {1, 2})
    pts = {(1, "X"): np.array([0.0, 0.0]), (2, "X"): np.array([10.0, 0.0]), (3, "X"): np.array([20.0, 0.0])}
    with pytest.raises(EmptyTerm):
        construct_tau_sigma(pts, table, 4.0, 2.0, 0.0)


def test_construct_rejects_small_delta():
    table = _spectator_table(2, {1, 2})
    with pytest.raises(ValueError):
        construct_tau_sigma({(1, "X"): [0.0, 0.0], (2, "X"): [0.1, 0.0]}, table, 3.0)


def test_all_good_reduces_to_pin_and_sum():
    table = _spectator_table(3, ())
    pts = {(1, "X"): np.array([0.0, 0.0]), (2, "X"): np.array([100.0, 0.0]), (3, "X"): np.array([250.0, 0.0])}
    g = construct_tau_sigma(pts, table, 4.0, 2.0, 0.0)
    plan = two_scale_schedule(g, table)
    assert plan.q == 0 and not plan.roots
    assert [rule for _, rule in plan.steps] == ["global_L1", "global_beta", "global_L1"]
    assert check_plan(plan, g)[0]


def _worked_example():
    tau = {15: 16, 16: 17, 17: 16, 18: 19, 19: 18, 24: 25, 25: 23, 23: 20, 20: 21, 21: 20, 22: 21, 26: 27, 27: 26}
    sigma = {15: 16, 16: 17, 17: 16, 18: 19, 19: 17, 20: 21, 21: 20, 22: 15, 23: 20, 24: 25, 25: 23, 26: 27, 27: 26}
    verts = list(range(15, 28))
    return TauSigmaGraph(verts, tau, sigma, frozenset(verts))


def test_worked_thirteen_vertex_example():
    g = _worked_example()
    plan = two_scale_schedule(g)
    assert plan.components == [list(range(15, 26)), [26, 27]]
    assert plan.q == 2 and plan.roots == [15, 26]
    assert [len(s) for s in plan.subcomponents] == [3, 1]
    rules = dict(plan.steps)
    assert {v for v, rule in rules.items() if rule == "local_beta"} == {17, 18, 20, 27}
    assert {v for v, rule in rules.items() if rule.startswith("global")} == {15, 26}
    assert rules[15] == rules[26] == "global_L1"
    assert plan.steps[-1] == (15, "global_L1")
    assert check_plan(plan, g) == (True, "ok")


def test_worked_example_alternative_order():
    g = _worked_example()
    plan = two_scale_schedule(g)
    rules = dict(plan.steps)
    order = [27, 26, 24, 25, 23, 20, 21, 22, 18, 19, 17, 16, 15]
    assert check_schedule(plan.edges, [(v, rules[v]) for v in order], LOCAL_LIMITS) == (True, "ok")


def test_tau_sigma_graph_validation():
    with pytest.raises(ValueError):
        TauSigmaGraph([0, 1], {0: 0, 1: 0}, {}, frozenset())
    with pytest.raises(ValueError):
        TauSigmaGraph([0, 1], {0: 1, 1: 0}, {0: 1}, frozenset({0}))


def test_graph_dump():
    dot = _worked_example().to_dot()
    assert dot.startswith("digraph") and "dashed" in dot and dot.count("->") == 26


@pytest.mark.parametrize("m, n", [(1, 2), (2, 2), (1, 3)])
def test_random_configurations_satisfy_claim(m, n):
    rng = np.random.default_rng(m * 10 + n)
    s = F(1, 5)
    dims = {i: FactorDims(s, s, 2 * s) for i in range(1, m + 1)}
    dims.update({i: FactorDims(s) for i in range(m + 1, n + 1)})
    r, delta = -3.0, 4.0
    built = 0
    for shape in enumerate_shapes(m, n):
        table = build_block_table(shape, dims, F(3, 10), F(1, 100), {i: F(0) for i in shape.i1[2]}, d=2)
        for _ in range(20):
            pts = sample_term_configuration(table, rng, delta, 2.0, r, 2)
            try:
                g = construct_tau_sigma(pts, table, delta, 2.0, r)
            except EmptyTerm:
                continue
            built += 1
            assert g.claim_holds, g.indicators
            for a in table.VBY:
                # a Y vertex sits within 2 L^r of its partner, so its nearest neighbour is close
                assert np.linalg.norm(pts[a] - pts[g.tau[a]]) <= delta * 2.0**r
            plan = two_scale_schedule(g, table)
            assert 2 * plan.q <= len(table.VBX)
            assert check_plan(plan, g) == (True, "ok")
    assert built > 0


# --- power counting ----------------------------------------------------------


def test_alpha_total_single_good_factor():
    shape = _shape(1, 1, ({1}, (), ()), i1=({1}, (), ()))
    t = build_block_table(shape, DIMS, F(1, 2), F(1, 20))
    assert alpha_total(t, 0) == F(9, 20)


def test_alpha_total_single_bad_factor_is_empty():
    shape = _shape(1, 1, ({1}, (), ()), i1=((), {1}, ()))
    dims = {1: FactorDims(F(1, 5), F(1, 5), F(2, 5))}
    t = build_block_table(shape, dims, F(3, 10), F(1, 100))
    assert max_components(t) == 0
    for q in (0, 1):
        with pytest.raises(LedgerError):
            alpha_total(t, q)


def test_nu_values():
    res = nu(1, F(3, 10), F(1, 100), [F(2, 5)])
    assert res.value == F(7, 100) and res.positive and res.binding == "delta[0]"
    assert nu(1, 5, F(1, 100), [F(2, 5)], [F(1, 5)]).binding == "delta[0]"
    with pytest.warns(RuntimeWarning):
        flagged = nu(1, F(3, 10), F(1, 100), [], [F(1, 2) - F(1, 100)])
    assert flagged.value <= 0 and not flagged.positive


@given(st.integers(1, 2), st.integers(1, 3), st.data())
def test_ledger_reconciles(m, n, data):
    n = max(m, n)
    shapes = list(enumerate_shapes(m, n))
    shape = data.draw(st.sampled_from(shapes))
    table = build_block_table(shape, DIMS, F(3, 10), F(1, 100), {i: F(1, 5) for i in shape.i1[2]})
    n_bad = len(shape.bad)
    qs = [0] if n_bad == 0 else list(range(1, max_components(table) + 1))
    for q in qs:
        led = build_ledger(table, q)
        assert led.reconciled
        assert 2 * q <= len(table.VBX)


def test_exhaustive_power_count_small():
    rep = exhaustive_check(max_m=2, max_n=2)
    assert rep.passed and rep.min_slack >= 0
    assert rep.nu_by_case["m=1,n=1,spect=-"] == F(7, 100)


# --- suites ------------------------------------------------------------------


def test_pinsum_suite_small():
    rep = pinsum_suite(n_configs=50, max_p=5, seed=4)
    assert rep.passed and rep.checked == 50
    assert rep.stats["ffe_counts"] == {"2": 1, "3": 8, "4": 81, "5": 1024}


def test_claim_suite_small():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rep = claim_suite(n_configs=20, seed=2)
    assert rep.passed and rep.checked > 0
