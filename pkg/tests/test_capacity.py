from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtocap.capacity import (InfeasibleFlowError, Schedule, airtime_account, chain_capacity,
                             chain_schedule, counting_identity, fig9_schedule, fig12_schedule,
                             schedule_throughput, upper_bound, verify_schedule)
from mtocap.conflict import min_hfd_csrange
from mtocap.geometry import RadioConfig
from mtocap.topology import (CanonicalSpec, build_bent_chains, build_canonical,
                             build_linear_chain, fig12_spec)


def _fig9(hops=7, d=250.0):
    return build_canonical(CanonicalSpec.equal(2, hops, d))


def test_chain_capacity_values():
    assert chain_capacity(2) == Fraction(2, 3)
    assert chain_capacity(10) == Fraction(10, 27)
    assert abs(chain_capacity(10**4) - Fraction(1, 3)) < 1e-4
    with pytest.raises(ValueError):
        chain_capacity(1)


@pytest.mark.parametrize("n", [2, 3, 4, 7, 10])
def test_chain_schedule_reaches_formula(n):
    topo = build_linear_chain(n, 250.0, "all")
    cfg = RadioConfig(cs_range=2.5 * 250)
    s = chain_schedule(n)
    assert verify_schedule(topo, s, cfg) == []
    assert schedule_throughput(topo, s, cfg).aggregate == chain_capacity(n)


def test_fig9_fixture():
    topo, s = _fig9(), fig9_schedule(7)
    cfg = RadioConfig(cs_range=2.9 * 250)
    assert verify_schedule(topo, s, cfg) == []
    assert schedule_throughput(topo, s, cfg).aggregate == Fraction(2, 3)
    ones = [k for k in s.links if k[1] == 0]
    assert not any(set(ones) <= slot for slot in s.slots)


@pytest.mark.parametrize("hops", [2, 3, 8])
def test_fig12_fixture(hops):
    topo = build_canonical(fig12_spec(hops))
    s = fig12_schedule(hops)
    for f in (2.63, 2.7, 3.0, 3.41):
        cfg = RadioConfig(cs_range=f * 250)
        assert verify_schedule(topo, s, cfg) == []
        assert schedule_throughput(topo, s, cfg).aggregate == Fraction(3, 4)
    bad = verify_schedule(topo, s, RadioConfig(cs_range=3.5 * 250))
    assert any(v.kind == "sensing" for v in bad)


def test_fig12_two_hop_slot_class():
    s = fig12_schedule(3)
    two = {(2, 1), (5, 4), (8, 7)}
    assert any(two <= slot for slot in s.slots)


def test_empty_schedule_ok():
    topo = _fig9()
    assert verify_schedule(topo, Schedule(0, ()), RadioConfig()) == []


def test_unknown_link_rejected():
    with pytest.raises(ValueError):
        verify_schedule(_fig9(), Schedule.from_assignment({(0, 1): [0]}, 1), RadioConfig())


def test_half_duplex_reported():
    topo = build_linear_chain(3, 250.0)
    s = Schedule.from_assignment({(2, 1): [0], (1, 0): [0]}, 1)
    assert [v.kind for v in verify_schedule(topo, s, RadioConfig())] == ["half_duplex"]


def test_aggregate_mode_is_stricter():
    topo = build_canonical(fig12_spec(8))
    s = fig12_schedule(8)
    cfg = RadioConfig(cs_range=2.7 * 250)
    pw = verify_schedule(topo, s, cfg, "pairwise")
    ag = verify_schedule(topo, s, cfg, "aggregate")
    assert pw == [] and len(ag) >= len(pw)
    with pytest.raises(ValueError):
        verify_schedule(topo, s, cfg, "both")


def test_no_feed_in_gives_zero():
    topo = build_linear_chain(3, 250.0, "far")
    s = Schedule.from_assignment({(1, 0): [0]}, 1)
    assert schedule_throughput(topo, s, RadioConfig()).aggregate == 0
    mx = schedule_throughput(topo, s, RadioConfig(), fairness="max")
    assert mx.aggregate == 0


def test_max_fairness_at_least_uniform():
    topo = build_linear_chain(6, 250.0, "all")
    s = chain_schedule(6)
    cfg = RadioConfig(cs_range=625)
    u = schedule_throughput(topo, s, cfg)
    m = schedule_throughput(topo, s, cfg, fairness="max")
    assert m.aggregate >= u.aggregate
    with pytest.raises(ValueError):
        schedule_throughput(topo, s, cfg, fairness="fair")


def test_conservation_exact():
    topo = build_linear_chain(5, 250.0, "all")
    rep = schedule_throughput(topo, chain_schedule(5), RadioConfig(cs_range=625))
    for v in range(1, 5):
        inflow = rep.link_flow[(v + 1, v)]
        assert inflow + rep.per_flow[v] == rep.link_flow[(v, v - 1)]


def test_upper_bound_examples():
    rep = upper_bound(build_canonical(fig12_spec(2)), RadioConfig(cs_range=675))
    assert rep.bound_fraction == Fraction(3, 4) and rep.ring2_concurrency == 3
    eq = upper_bound(build_canonical(CanonicalSpec.equal(4, 4, 250.0)), RadioConfig(cs_range=800))
    assert eq.bound_fraction == Fraction(2, 3) and eq.equal_length
    single = upper_bound(build_linear_chain(4, 250.0, "far"), RadioConfig(cs_range=625))
    assert single.bound_fraction == Fraction(1, 2)
    assert "ring2_concurrency: 3" in rep.as_text()


def test_upper_bound_errors():
    with pytest.raises(ValueError):
        upper_bound(build_linear_chain(3, 250.0, "all"), RadioConfig(cs_range=625))
    with pytest.raises(ValueError):
        upper_bound(build_canonical(fig12_spec(2)), RadioConfig(cs_range=300))


def test_airtime_account():
    topo = _fig9()
    acc = airtime_account(topo, fig9_schedule(7))
    assert acc.ring_airtime[1] == Fraction(2, 3)
    assert acc.ring_airtime[2] == Fraction(1, 3)
    assert acc.ring_airtime[1] + acc.ring_airtime[2] <= 1


@pytest.mark.parametrize("topo,sched", [
    (build_canonical(fig12_spec(4)), fig12_schedule(4)),
    (_fig9(), fig9_schedule(7)),
])
def test_counting_identity(topo, sched):
    val, k = counting_identity(topo, sched)
    assert val <= 1 and k >= 1


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(1, 5))
def test_repeat_keeps_airtime(n, times):
    s = chain_schedule(n)
    assert s.repeat(times).airtime() == s.airtime()


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8).flatmap(lambda f: st.tuples(
    st.just(f), st.dictionaries(st.tuples(st.integers(0, 20), st.integers(0, 20)).filter(
        lambda k: k[0] != k[1]), st.lists(st.integers(0, f - 1), max_size=f), max_size=6))))
def test_schedule_roundtrip(args):
    frame, assign = args
    s = Schedule.from_assignment(assign, frame)
    assert Schedule.loads(s.dumps()) == s


def test_schedule_loads_errors():
    with pytest.raises(ValueError):
        Schedule.loads("slot x 1 2")
    with pytest.raises(ValueError):
        Schedule.loads("slot 0: 1-2")


@pytest.mark.parametrize("seed", range(10))
def test_bent_chains_two_thirds(seed):
    topo = build_bent_chains(4, 4, 250.0, seed=seed)
    cs = max(min_hfd_csrange(topo, RadioConfig()), 250.0)
    assert upper_bound(topo, RadioConfig(cs_range=cs)).bound_fraction <= Fraction(2, 3)


def test_infeasible_error_type():
    assert issubclass(InfeasibleFlowError, ValueError)
