"""Discrete-event 802.11 DCF (basic access) simulator for many-to-one traffic.

Times are integer nanoseconds. Carrier sensing is physical only: a node's
medium is busy while any transmitter within cs_range (itself included) is
on the air. Receivers lock onto the first frame whose transmitter is within
cs_range; with rs_mode they switch to a later frame at least
capture_ratio times stronger.
"""

from __future__ import annotations

import csv
import heapq
import io
import logging

from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .conflict import hidden_node_pairs
from .geometry import Point2D, RadioConfig
from .rng import rng_for, stream_seed
from .topology import NodeRole, Topology, _finish

log = logging.getLogger(__name__)

NS = 1000  # ns per microsecond


@dataclass(frozen=True)
class MacParams:
    slot_time: float = 20.0       # us
    sifs: float = 10.0            # us
    difs: float = 50.0            # us
    cw_min: int = 31
    cw_max: int = 1023
    data_rate: float = 11e6       # bit/s
    phy_header_time: float = 192.0  # us
    ack_time: float = 304.0       # us, PHY header + 14 B at 1 Mb/s
    mac_header_bytes: int = 28
    payload_bytes: int = 1460
    retry_limit: int = 7
    eifs: bool = False            # defer SIFS + ACK + DIFS after an undecodable frame

    def __post_init__(self):
        if not self.cw_min <= self.cw_max:
            raise ValueError("cw_min must be <= cw_max")
        for name in ("slot_time", "sifs", "difs", "data_rate", "phy_header_time", "ack_time"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.payload_bytes <= 0 or self.retry_limit < 0 or self.cw_min < 0:
            raise ValueError("payload_bytes > 0, retry_limit >= 0, cw_min >= 0 required")

    @property
    def data_time(self) -> float:
        bits = 8 * (self.mac_header_bytes + self.payload_bytes)
        return self.phy_header_time + bits / self.data_rate * 1e6

    @property
    def payload_bits(self) -> int:
        return 8 * self.payload_bytes


@dataclass(frozen=True)
class TrafficSpec:
    load_bps: float                 # offered load per source
    process: str = "cbr"
    queue_capacity: int = 50

    def __post_init__(self):
        if self.load_bps < 0:
            raise ValueError("offered load must be >= 0")
        if self.process not in ("cbr", "poisson"):
            raise ValueError("process must be 'cbr' or 'poisson'")
        if self.queue_capacity < 1:
            raise ValueError("queue_capacity must be >= 1")


@dataclass
class SimResult:
    aggregate_throughput: float
    per_flow_throughput: dict[int, float]
    collisions_hidden_node: int
    collisions_countdown: int
    per_node_airtime: dict[int, float]
    sim_duration: float
    offered_load: float = 0.0
    generated: int = 0
    delivered: int = 0
    dropped: int = 0
    queued: int = 0
    transmissions: int = 0




# -- internals -------------------------------------------------------------

_END, _OTHER = 0, 1          # frame ends are handled before anything else at equal times
_K_ARRIVAL, _K_BACKOFF, _K_ACK, _K_TXEND, _K_TIMEOUT = range(5)

_IDLE, _CONTEND, _TX, _WAIT_ACK = range(4)


class _Packet:
    __slots__ = ("pid", "src", "holder")

    def __init__(self, pid, src):
        self.pid, self.src, self.holder = pid, src, src


class _Frame:
    __slots__ = ("tx", "rx", "is_ack", "packet", "end", "corrupted", "cause", "interf",
                 "owner", "length")

    def __init__(self, tx, rx, is_ack, packet, end, length):
        self.tx, self.rx, self.is_ack, self.packet, self.end = tx, rx, is_ack, packet, end
        self.length = length
        self.corrupted = False
        self.cause = None
        self.interf = 0.0
        self.owner = rx if is_ack else tx   # DATA sender of the exchange


class _Node:
    __slots__ = ("queue", "state", "cw", "retries", "backoff", "bo_start", "bo_gen",
                 "busy", "idle_since", "lock", "txing", "tx_time", "timeout_gen",
                 "last_fail", "err", "clean")

    def __init__(self, cw):
        self.queue = deque()
        self.state = _IDLE
        self.cw = cw
        self.retries = 0
        self.backoff = 0
        self.bo_start = None
        self.bo_gen = 0
        self.busy = 0
        self.idle_since = 0
        self.lock = None
        self.txing = None
        self.tx_time = 0
        self.timeout_gen = 0
        self.last_fail = None
        self.err = False      # last sensed frame could not be decoded: use EIFS
        self.clean = True     # no strong interferer since the current lock began


class _Sim:
    def __init__(self, topo, config, mac, traffic, duration, seed, mode, warmup):
        if mode not in ("pairwise", "aggregate"):
            raise ValueError("mode must be 'pairwise' or 'aggregate'")
        if not duration > 0:
            raise ValueError("duration must be > 0")
        if not 0 <= warmup < 1:
            raise ValueError("warmup fraction must lie in [0, 1)")
        topo.validate(config.tx_range)
        self.cfg, self.mac, self.traffic, self.mode, self.seed = config, mac, traffic, mode, seed
        self.agg = mode == "aggregate"
        self.ids = topo.active_nodes()
        idx = {v: k for k, v in enumerate(self.ids)}
        n = len(self.ids)
        xy = np.array([topo.positions[v] for v in self.ids], dtype=float)
        d = np.hypot(xy[:, None, 0] - xy[None, :, 0], xy[:, None, 1] - xy[None, :, 1])
        with np.errstate(divide="ignore"):
            p = config.tx_power / d ** config.path_loss_exp
        self.dist = d.tolist()
        self.power = p.tolist()
        cs = config.cs_range
        self.hear = [[j for j in range(n) if j != k and d[k, j] <= cs] for k in range(n)]
        self.next_hop = [idx[topo.routes[v]] if v != topo.sink else -1 for v in self.ids]
        self.sink = idx[topo.sink]
        self.margin = 1.0 + config.delta
        self.sources = [idx[s] for s in topo.sources]
        self.nodes = [_Node(mac.cw_min) for _ in range(n)]

        self.slot = round(mac.slot_time * NS)
        self.sifs = round(mac.sifs * NS)
        self.difs = round(mac.difs * NS)
        self.t_data = round(mac.data_time * NS)
        self.t_ack = round(mac.ack_time * NS)
        self.t_timeout = self.sifs + self.t_ack + self.slot
        self.eifs = self.sifs + self.t_ack + self.difs if mac.eifs else self.difs
        self.rx_range = config.tx_range * (1 + 1e-9) + 1e-6
        self.t_end = round(duration * 1e9)
        self.t_warm = round(warmup * duration * 1e9)
        self.duration = duration

        self.bo_rng = [rng_for(seed, "backoff", str(v)) for v in self.ids]
        self.events: list = []
        self.seq = 0
        self.now = 0
        self.active: list[_Frame] = []
        self.receiving: list[_Frame] = []

        self.next_pid = 0
        self.generated = 0
        self.delivered_total = 0
        self.dropped = 0
        self.tx_count = 0
        self.delivered_bits = [0] * n
        self.hn = 0
        self.cd = 0

    def push(self, t, kind, node, payload=None):
        self.seq += 1
        heapq.heappush(self.events, (t, _END if kind == _K_TXEND else _OTHER,
                                     node, kind, self.seq, payload))

    def run(self) -> SimResult:
        rate = self.traffic.load_bps / self.mac.payload_bits
        if rate > 0:
            for s in self.sources:
                rng = rng_for(self.seed, "traffic", str(self.ids[s]))
                gap = 1.0 / rate
                first = rng.uniform(0, gap) if self.traffic.process == "cbr" else rng.expovariate(rate)
                self.push(round(first * 1e9), _K_ARRIVAL, s, (rng, gap, rate))
        ev, pop = self.events, heapq.heappop
        handlers = (self._arrival, self._backoff_done, self._send_ack, self._tx_end,
                    self._timeout)
        t_end = self.t_end
        while ev:
            t, _, node, kind, _, payload = pop(ev)
            if t > t_end:
                break
            self.now = t
            handlers[kind](node, payload)
        return self._result()

    # traffic -----------------------------------------------------------
    def _arrival(self, i, payload):
        rng, gap, rate = payload
        pkt = _Packet(self.next_pid, i)
        self.next_pid += 1
        self.generated += 1
        self._enqueue(i, pkt)
        step = gap if self.traffic.process == "cbr" else rng.expovariate(rate)
        self.push(self.now + max(1, round(step * 1e9)), _K_ARRIVAL, i, payload)

    def _enqueue(self, i, pkt):
        nd = self.nodes[i]
        if len(nd.queue) >= self.traffic.queue_capacity:
            pkt.holder = None
            self.dropped += 1
            return
        pkt.holder = i
        nd.queue.append(pkt)
        if nd.state == _IDLE:
            self._contend(i)

    # backoff -----------------------------------------------------------
    def _contend(self, i):
        nd = self.nodes[i]
        nd.state = _CONTEND
        nd.backoff = self.bo_rng[i].randint(0, nd.cw)
        nd.bo_start = None
        nd.bo_gen += 1
        if nd.busy == 0:
            wait = self.eifs if nd.err else self.difs
            self._resume(i, max(self.now, nd.idle_since + wait))

    def _resume(self, i, start):
        nd = self.nodes[i]
        nd.bo_gen += 1
        nd.bo_start = start
        self.push(start + nd.backoff * self.slot, _K_BACKOFF, i, nd.bo_gen)

    def _freeze(self, i):
        nd = self.nodes[i]
        if nd.state != _CONTEND or nd.bo_start is None:
            return
        if nd.bo_start + nd.backoff * self.slot <= self.now:
            return      # counter reaches zero in this very instant: transmission committed
        if self.now > nd.bo_start:
            nd.backoff -= (self.now - nd.bo_start) // self.slot
        nd.bo_start = None
        nd.bo_gen += 1

    def _backoff_done(self, i, gen):
        nd = self.nodes[i]
        if gen != nd.bo_gen or nd.state != _CONTEND:
            return
        nd.bo_start = None
        nd.state = _TX
        self._start_frame(i, self.next_hop[i], False, nd.queue[0])

    # medium ------------------------------------------------------------
    def _busy_inc(self, m):
        nd = self.nodes[m]
        nd.busy += 1
        if nd.busy == 1:
            self._freeze(m)

    def _busy_dec(self, m):
        nd = self.nodes[m]
        nd.busy -= 1
        if nd.busy == 0:
            nd.idle_since = self.now
            if nd.state == _CONTEND:
                self._resume(m, self.now + (self.eifs if nd.err else self.difs))

    @staticmethod
    def _kill(f, cause):
        if not f.corrupted:
            f.corrupted = True
            f.cause = cause

    def _start_frame(self, i, r, is_ack, pkt):
        now = self.now
        f = _Frame(i, r, is_ack, pkt, now + (self.t_ack if is_ack else self.t_data),
                   self.dist[i][r])
        nodes, power = self.nodes, self.power
        self.tx_count += 1
        me = nodes[i]
        me.txing = f
        me.err = False
        me.tx_time += max(0, min(f.end, self.t_end) - max(now, self.t_warm))
        g = me.lock
        if g is not None:   # half duplex: whatever i was receiving is lost
            me.lock = None
            if g.rx == i:
                self._kill(g, f)
                self.receiving.remove(g)
        self._busy_inc(i)
        rs, cr = self.cfg.rs_mode, self.cfg.capture_ratio
        heard_by_r = False
        for m in self.hear[i]:
            self._busy_inc(m)
            nm = nodes[m]
            if m == r:
                heard_by_r = True
            if nm.txing is not None:
                if m == r:
                    self._kill(f, nm.txing)
                continue
            g = nm.lock
            if g is None or (rs and power[i][m] >= cr * power[g.tx][m]):
                if g is not None:
                    nm.err = True
                    if g.rx == m:
                        self._kill(g, f)
                        self.receiving.remove(g)
                nm.lock = f
                nm.clean = True
                if m == r:
                    self._start_receiving(f)
            else:
                if m == r:
                    self._kill(f, g)
                elif not self.dist[i][m] > self.margin * self.dist[g.tx][m]:
                    nm.clean = False
        if not heard_by_r:
            self._kill(f, f)
        # f as interference on the other ongoing receptions
        if self.agg:
            sir = self.cfg.sir_threshold
            for g in self.receiving:
                if g is not f:
                    g.interf += power[i][g.rx]
                    if not g.corrupted and power[g.tx][g.rx] < sir * g.interf:
                        self._kill(g, f)
        else:
            dist, lim = self.dist, self.margin
            for g in self.receiving:
                if g is not f and not g.corrupted and not dist[i][g.rx] > lim * g.length:
                    self._kill(g, f)
        self.active.append(f)
        self.push(f.end, _K_TXEND, i, f)

    def _start_receiving(self, f):
        r = f.rx
        if self.agg:
            p = self.power
            worst = None
            for h in self.active:
                f.interf += p[h.tx][r]
                if worst is None or p[h.tx][r] > p[worst.tx][r]:
                    worst = h
            if worst is not None and p[f.tx][r] < self.cfg.sir_threshold * f.interf:
                self._kill(f, worst)
        else:
            dist, lim = self.dist, self.margin * f.length
            for h in self.active:
                if not dist[h.tx][r] > lim:
                    self._kill(f, h)
                    break
        self.receiving.append(f)

    def _tx_end(self, i, f):
        self.active.remove(f)
        nodes = self.nodes
        if self.agg:
            p = self.power
            for g in self.receiving:
                if g is not f:
                    g.interf -= p[i][g.rx]
        r = f.rx
        ok = False
        for m in self.hear[i]:
            nm = nodes[m]
            if nm.lock is f:
                nm.lock = None
                if m == r:
                    ok = not f.corrupted
                    self.receiving.remove(f)
                    nm.err = not ok
                else:
                    nm.err = not (nm.clean and self.dist[i][m] <= self.rx_range)
        me = nodes[i]
        me.txing = None
        for m in self.hear[i]:
            self._busy_dec(m)
        self._busy_dec(i)
        if f.is_ack:
            if ok:
                self._ack_received(r, f)
            elif nodes[r].last_fail is None:
                nodes[r].last_fail = f.cause
            return
        me.state = _WAIT_ACK
        me.timeout_gen += 1
        me.last_fail = None
        self.push(self.now + self.t_timeout, _K_TIMEOUT, i, me.timeout_gen)
        if ok:
            self._data_received(r, f)
        else:
            me.last_fail = f.cause

    def _data_received(self, r, f):
        pkt = f.packet
        if pkt.holder == f.tx:        # otherwise a retransmitted duplicate
            if r == self.sink:
                pkt.holder = r
                self.delivered_total += 1
                if self.now >= self.t_warm:
                    self.delivered_bits[pkt.src] += self.mac.payload_bits
            else:
                self._enqueue(r, pkt)
        self.push(self.now + self.sifs, _K_ACK, r, f)

    def _send_ack(self, r, f):
        if self.nodes[r].txing is None:
            self._start_frame(r, f.tx, True, f.packet)

    def _ack_received(self, i, f):
        nd = self.nodes[i]
        if nd.state != _WAIT_ACK or not nd.queue or nd.queue[0] is not f.packet:
            return
        nd.timeout_gen += 1
        nd.queue.popleft()
        nd.cw = self.mac.cw_min
        nd.retries = 0
        self._next(i)

    def _timeout(self, i, gen):
        nd = self.nodes[i]
        if gen != nd.timeout_gen or nd.state != _WAIT_ACK:
            return
        self._count_collision(i, nd.last_fail)
        nd.retries += 1
        if nd.retries > self.mac.retry_limit:
            pkt = nd.queue.popleft()
            if pkt.holder == i:
                pkt.holder = None
                self.dropped += 1
            nd.retries = 0
            nd.cw = self.mac.cw_min
        else:
            nd.cw = min(2 * nd.cw + 1, self.mac.cw_max)
        self._next(i)

    def _next(self, i):
        nd = self.nodes[i]
        if nd.queue:
            self._contend(i)
        else:
            nd.state = _IDLE

    def _count_collision(self, i, cause):
        if self.now < self.t_warm:
            return
        if cause is not None and self.dist[i][cause.owner] > self.cfg.cs_range:
            self.hn += 1
        else:
            self.cd += 1

    def _result(self) -> SimResult:
        span_ns = self.t_end - self.t_warm
        per_flow = {self.ids[s]: self.delivered_bits[s] * 1e9 / span_ns for s in self.sources}
        air = {self.ids[k]: min(1.0, nd.tx_time / span_ns) for k, nd in enumerate(self.nodes)}
        return SimResult(
            aggregate_throughput=sum(per_flow.values()),
            per_flow_throughput=per_flow,
            collisions_hidden_node=self.hn,
            collisions_countdown=self.cd,
            per_node_airtime=air,
            sim_duration=self.duration,
            offered_load=self.traffic.load_bps,
            generated=self.generated,
            delivered=self.delivered_total,
            dropped=self.dropped,
            queued=sum(1 for k, nd in enumerate(self.nodes) for q in nd.queue if q.holder == k),
            transmissions=self.tx_count,
        )


# -- public API ------------------------------------------------------------

def run(topology: Topology, config: RadioConfig, mac: MacParams, traffic: TrafficSpec,
        duration: float, seed: int = 0, mode: str = "pairwise",
        warmup: float = 0.1) -> SimResult:
    """Simulate `duration` seconds; throughput excludes the first `warmup` fraction."""
    return _Sim(topology, config, mac, traffic, duration, seed, mode, warmup).run()


def isolated_link(length: float = 200.0) -> Topology:
    pos = {0: Point2D(0.0, 0.0), 1: Point2D(length, 0.0)}
    return _finish(pos, {0: NodeRole.SINK, 1: NodeRole.SOURCE}, [(1, 0)])


@lru_cache(maxsize=32)
def measure_link_capacity(mac: MacParams = MacParams(), duration: float = 10.0,
                          seed: int = 0) -> float:
    """Saturated single-link throughput L_sim in bit/s."""
    cfg = RadioConfig()
    load = 2.0 * mac.data_rate
    res = run(isolated_link(0.8 * cfg.tx_range), cfg, mac,
              TrafficSpec(load, queue_capacity=50), duration, seed)
    return res.aggregate_throughput


def default_load_grid(l_sim: float, n_sources: int, points: int = 20,
                      lo: float = 0.05, hi: float = 1.2) -> list[float]:
    if points < 1 or n_sources < 1:
        raise ValueError("need points >= 1 and n_sources >= 1")
    base = l_sim / n_sources
    if points == 1:
        return [lo * base]
    return [float(x) for x in np.geomspace(lo * base, hi * base, points)]


@dataclass
class SweepResult:
    best_load: float
    best: SimResult
    curve: list[tuple[float, SimResult]]


def sweep_load(topology: Topology, config: RadioConfig, mac: MacParams,
               load_grid: Sequence[float], duration: float, seed: int = 0,
               mode: str = "pairwise", process: str = "cbr",
               queue_capacity: int = 50) -> SweepResult:
    """Run once per offered load; the best aggregate wins, ties to the lower load."""
    if not load_grid:
        raise ValueError("load grid must not be empty")
    curve = []
    for k, load in enumerate(load_grid):
        s = stream_seed(seed, "sweep", str(k))
        res = run(topology, config, mac, TrafficSpec(load, process, queue_capacity),
                  duration, s, mode)
        curve.append((load, res))
    best_load, best = curve[0]
    for load, res in curve[1:]:
        better = res.aggregate_throughput > best.aggregate_throughput
        tie = res.aggregate_throughput == best.aggregate_throughput and load < best_load
        if better or tie:
            best_load, best = load, res
    return SweepResult(best_load, best, curve)


@dataclass
class CsRow:
    cs_range: float
    best_load: float
    best: SimResult
    hfd: bool


def csrange_sweep(topology: Topology, mac: MacParams, cs_grid: Sequence[float],
                  duration: float, seed: int = 0, config: Optional[RadioConfig] = None,
                  load_grid: Optional[Sequence[float]] = None,
                  mode: str = "pairwise") -> list[CsRow]:
    """Best swept throughput per CSRange, tagged with hidden-node freedom."""
    base = config or RadioConfig()
    if not base.rs_mode:
        raise ValueError("csrange_sweep runs with rs_mode on")
    if load_grid is None:
        load_grid = default_load_grid(measure_link_capacity(mac), len(topology.sources))
    rows = []
    for cs in cs_grid:
        cfg = base.with_cs(cs)
        sw = sweep_load(topology, cfg, mac, load_grid, duration, seed, mode)
        hfd = not hidden_node_pairs(topology, cfg, topology.route_links())
        rows.append(CsRow(cs, sw.best_load, sw.best, hfd))
    return rows


CSV_HEADER = ["csrange", "offered_load", "throughput_bps", "throughput_over_L",
              "hn_collisions", "countdown_collisions"]


def csv_rows(rows: Sequence[tuple[float, SimResult]], l_sim: float,
             cs_range: Optional[float] = None) -> list[list]:
    out = []
    for cs, res in rows:
        out.append([cs if cs_range is None else cs_range, res.offered_load,
                    res.aggregate_throughput, res.aggregate_throughput / l_sim,
                    res.collisions_hidden_node, res.collisions_countdown])
    return out


def write_csv(rows: Sequence[Sequence], fh=None, extra: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER + list(extra))
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text
