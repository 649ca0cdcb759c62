import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtocap import topology as T
from mtocap.conflict import min_hfd_csrange
from mtocap.geometry import RadioConfig
from mtocap.topology import CanonicalSpec, NodeRole, build_canonical


def test_canonical_counts_and_rings():
    topo = build_canonical(CanonicalSpec.equal(4, 5, 250.0))
    assert len(topo.nodes) == 21
    assert len(topo.sources) == 4
    assert max(topo.ring_index.values()) == 5
    for s in topo.sources:
        assert topo.route_hops(s) == 5
    topo.validate(250.0)


def test_canonical_ring_radius():
    spec = T.table1_spec(7)
    topo = build_canonical(spec)
    n = spec.hops_per_chain
    for j in range(3):
        for i in range(1, n + 1):
            p = topo.positions[T.canonical_id(j, i, n)]
            assert math.hypot(*p) == pytest.approx(spec.ring_radius(i), abs=1e-5)
    assert spec.ring_radius(2) == 492.0


def test_canonical_spec_errors():
    with pytest.raises(ValueError):
        CanonicalSpec(0, 3, (1.0,))
    with pytest.raises(ValueError):
        CanonicalSpec(2, 3, (1.0, -1.0))
    with pytest.raises(ValueError):
        CanonicalSpec(2, 3, (1.0,), (0.0, 2 * math.pi))


def test_linear_chain_policies():
    far = T.build_linear_chain(5, 200, "far")
    assert far.sources == [5]
    allc = T.build_linear_chain(5, 200, "all")
    assert allc.sources == [1, 2, 3, 4, 5]
    assert allc.roles[5] is NodeRole.SOURCE
    assert allc.roles[2] is NodeRole.SOURCE_AND_RELAY
    assert T.build_linear_chain(5, 200, "from3").sources == [3, 4, 5]
    with pytest.raises(ValueError):
        T.build_linear_chain(0, 200)


def test_unreachable_source():
    pos = {0: T.Point2D(0, 0), 1: T.Point2D(1000, 0)}
    topo = T.Topology(pos, {0: NodeRole.SINK, 1: NodeRole.SOURCE}, (), 0)
    with pytest.raises(T.UnreachableError) as e:
        T.route_min_hop(topo)
    assert e.value.nodes == [1]


def test_two_chain_bend():
    topo = T.build_two_chain_asym(250.0)
    a = topo.positions[T.canonical_id(1, 1, 7)]
    assert math.atan2(a.y, a.x) == pytest.approx(T.DEFAULT_BEND, abs=1e-6)
    with pytest.raises(ValueError):
        T.build_two_chain_asym(250.0, 0.0)


@pytest.mark.parametrize("seed", range(4))
def test_random_disk_connected(seed):
    topo = T.build_random_disk(seed=seed)
    topo.validate(0.4)
    assert len(topo.sources) == 6
    for s in topo.sources:
        assert topo.path(s)[-1] == 0


def test_random_disk_deterministic():
    assert T.build_random_disk(seed=3) == T.build_random_disk(seed=3)
    assert T.build_random_disk(seed=3) != T.build_random_disk(seed=4)


def test_manifold_core_size():
    pos, roles = T.manifold_core()
    assert len(pos) == 31
    assert sum(r is NodeRole.RELAY for r in roles.values()) == 30
    assert max(math.hypot(*p) for p in pos.values()) <= 1026.0


def test_manifold_jitter_moves_core_only():
    a = T.build_manifold(1312, 1026, seed=2, n_outer=20)
    b = T.build_manifold(1312, 1026, seed=2, n_outer=20, jitter=0.05)
    moved = [n for n in range(1, 31) if a.positions[n] != b.positions[n]]
    assert moved and max(a.positions[n].dist(b.positions[n]) for n in moved) <= 10.0 + 1e-6


def test_centric_outer_spacing():
    topo = T.build_centric(1500, 980, n_outer=30, seed=1)
    outer = [n for n in topo.nodes if topo.roles[n] is NodeRole.SOURCE_AND_RELAY]
    for i, a in enumerate(outer):
        for b in outer[i + 1:]:
            assert topo.positions[a].dist(topo.positions[b]) >= 125.0 - 1e-5


def test_annulus_gives_up():
    with pytest.raises(RuntimeError):
        T.build_centric(1000, 980, n_outer=50, seed=0, max_attempts=2000)


def test_fig17_spurs():
    topo = T.build_fig17(250.0)
    assert len(topo.nodes) == 9
    assert {(2, 7), (4, 8)} <= {l.key for l in topo.links}
    hfd = min_hfd_csrange(topo, RadioConfig())
    assert hfd == pytest.approx(3.417 * 250, rel=1e-3)


def test_restrict_drops_nodes():
    topo = build_canonical(CanonicalSpec.equal(3, 3, 250.0))
    sub = topo.restrict([1, 2, 3])
    assert sub.nodes == [0, 1, 2, 3]
    assert all(l.tx in sub.positions and l.rx in sub.positions for l in sub.links)


def test_loads_rejects():
    with pytest.raises(ValueError):
        T.loads("node 0 0 0 sink\n")
    with pytest.raises(ValueError):
        T.loads("topology v1\nnode 0 0 0 sink\nbogus 1\n")
    with pytest.raises(ValueError):
        T.loads("topology v1\nnode 0 0 0 relay\n")


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(1, 6), st.floats(50, 300), st.integers(0, 10**6))
def test_roundtrip_canonical_and_bent(n, hops, d, seed):
    for topo in (build_canonical(CanonicalSpec.equal(n, hops, d)),
                 T.build_bent_chains(n, hops, d, seed=seed)):
        assert T.loads(T.dumps(topo)) == topo


def test_roundtrip_file(tmp_path):
    topo = T.build_random_disk(seed=1)
    path = tmp_path / "t.txt"
    T.save(topo, path)
    assert T.load(path) == topo


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.integers(2, 6), st.integers(0, 10**6))
def test_bent_chain_equal_lengths(n, hops, seed):
    topo = T.build_bent_chains(n, hops, 250.0, seed=seed)
    lens = [l.length for l in topo.links]
    assert max(lens) - min(lens) < 1e-4
