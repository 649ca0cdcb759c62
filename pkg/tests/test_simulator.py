import csv
import io

import pytest

from mtocap import simulator as S
from mtocap.geometry import RadioConfig
from mtocap.topology import CanonicalSpec, build_canonical, build_linear_chain, fig12_spec


def _run(topo, load, cs=675.0, duration=3.0, seed=0, mode="pairwise", **kw):
    return S.run(topo, RadioConfig(cs_range=cs), S.MacParams(**kw), S.TrafficSpec(load),
                 duration, seed, mode)


def test_mac_timing():
    mac = S.MacParams()
    assert mac.data_time == pytest.approx(192 + 8 * 1488 / 11)
    with pytest.raises(ValueError):
        S.MacParams(cw_min=64, cw_max=32)
    with pytest.raises(ValueError):
        S.TrafficSpec(1e5, process="burst")
    with pytest.raises(ValueError):
        S.TrafficSpec(-1)


def test_link_capacity_matches_airtime_arithmetic(l_sim, mac):
    mean_backoff = mac.cw_min / 2 * mac.slot_time
    cycle = mac.difs + mean_backoff + mac.data_time + mac.sifs + mac.ack_time
    assert l_sim == pytest.approx(mac.payload_bits / (cycle * 1e-6), rel=0.01)


def test_deterministic():
    topo = build_canonical(fig12_spec(3))
    a = _run(topo, 1.5e6, seed=7)
    b = _run(topo, 1.5e6, seed=7)
    assert a == b
    c = _run(topo, 1.5e6, seed=8)
    assert c.aggregate_throughput != a.aggregate_throughput


@pytest.mark.parametrize("load", [2e5, 3e6])
def test_packet_conservation(load):
    topo = build_canonical(CanonicalSpec.equal(4, 4, 250.0))
    r = _run(topo, load, cs=800)
    assert r.generated == r.delivered + r.dropped + r.queued


def test_light_load_all_delivered():
    topo = build_linear_chain(4, 200.0, "far")
    r = _run(topo, 1e5, cs=550, duration=4.0)
    assert r.aggregate_throughput == pytest.approx(1e5, rel=0.05)
    assert r.dropped == 0


def test_hfd_means_no_hidden_collisions():
    topo = build_canonical(fig12_spec(4))
    r = _run(topo, 3e6, cs=2.7 * 250)
    assert r.collisions_hidden_node == 0
    assert r.collisions_countdown > 0


def test_small_csrange_causes_hidden_collisions():
    topo = build_linear_chain(6, 250.0, "far")
    r = _run(topo, 3e6, cs=300)
    assert r.collisions_hidden_node > 0


def test_aggregate_mode_not_better():
    topo = build_canonical(fig12_spec(8))
    pw = _run(topo, 2e6, cs=675, duration=5.0, seed=3)
    ag = _run(topo, 2e6, cs=675, duration=5.0, seed=3, mode="aggregate")
    assert ag.aggregate_throughput <= pw.aggregate_throughput * 1.05


def test_poisson_and_eifs_run():
    topo = build_canonical(fig12_spec(2))
    r = S.run(topo, RadioConfig(), S.MacParams(eifs=True), S.TrafficSpec(5e5, "poisson"), 2.0)
    assert r.delivered > 0


def test_bad_arguments():
    topo = build_canonical(fig12_spec(2))
    with pytest.raises(ValueError):
        _run(topo, 1e5, mode="sum")
    with pytest.raises(ValueError):
        _run(topo, 1e5, duration=0)


def test_per_flow_sums_to_aggregate():
    topo = build_canonical(CanonicalSpec.equal(3, 3, 250.0))
    r = _run(topo, 8e5, cs=900)
    assert sum(r.per_flow_throughput.values()) == pytest.approx(r.aggregate_throughput)
    assert set(r.per_flow_throughput) == set(topo.sources)


def test_load_grid():
    g = S.default_load_grid(6e6, 3, points=5, lo=0.1, hi=1.0)
    assert g[0] == pytest.approx(2e5) and g[-1] == pytest.approx(2e6)
    assert g == sorted(g)
    with pytest.raises(ValueError):
        S.default_load_grid(6e6, 0)


def test_sweep_picks_best():
    topo = build_canonical(fig12_spec(2))
    sw = S.sweep_load(topo, RadioConfig(), S.MacParams(), [2e5, 1e6, 2.5e6], 2.0)
    best = max(r.aggregate_throughput for _, r in sw.curve)
    assert sw.best.aggregate_throughput == best
    with pytest.raises(ValueError):
        S.sweep_load(topo, RadioConfig(), S.MacParams(), [], 1.0)


def test_csrange_sweep_flags_hfd(mac):
    topo = build_canonical(fig12_spec(2))
    rows = S.csrange_sweep(topo, mac, [400.0, 675.0], 1.5, load_grid=[1e6, 2e6])
    assert [r.hfd for r in rows] == [False, True]


def test_csv_roundtrip():
    topo = build_canonical(fig12_spec(2))
    res = [(675.0, _run(topo, 1e6, duration=1.0))]
    text = S.write_csv(S.csv_rows(res, 6e6))
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == S.CSV_HEADER
    assert float(rows[1][2]) == res[0][1].aggregate_throughput
    buf = io.StringIO()
    S.write_csv([[1, 2.5, 3, 4, 5, 6, "x"]], buf, extra=["tag"])
    assert buf.getvalue().splitlines()[0].endswith(",tag")
