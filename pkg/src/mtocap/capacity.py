"""Slot schedules, airtime accounting, ring-based capacity bounds and
scheduled many-to-one throughput on routing trees."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional

from .conflict import hidden_node_pairs, max_concurrent_set, ring_links
from .geometry import RadioConfig, make_link, received_power, violated_inequalities
from .topology import Topology, canonical_id

LinkKey = tuple[int, int]


@dataclass(frozen=True)
class Schedule:
    """Periodic frame of equal-length slots; slot k activates `slots[k]`."""

    frame_slots: int
    slots: tuple[frozenset, ...]

    def __post_init__(self):
        if self.frame_slots < 0:
            raise ValueError("frame_slots must be >= 0")
        sl = tuple(frozenset(s) for s in self.slots)
        if len(sl) > self.frame_slots:
            raise ValueError("more slot assignments than frame slots")
        sl = sl + (frozenset(),) * (self.frame_slots - len(sl))
        object.__setattr__(self, "slots", sl)

    @classmethod
    def from_assignment(cls, link_slots: Mapping[LinkKey, Iterable[int]],
                        frame_slots: int) -> "Schedule":
        slots = [set() for _ in range(frame_slots)]
        for key, ks in link_slots.items():
            for k in ks:
                if not 0 <= k < frame_slots:
                    raise ValueError(f"slot {k} outside frame of {frame_slots}")
                slots[k].add(tuple(key))
        return cls(frame_slots, tuple(frozenset(s) for s in slots))

    @property
    def links(self) -> set[LinkKey]:
        return set().union(*self.slots) if self.slots else set()

    def airtime(self) -> dict[LinkKey, Fraction]:
        if self.frame_slots == 0:
            return {}
        count: dict[LinkKey, int] = {}
        for s in self.slots:
            for key in s:
                count[key] = count.get(key, 0) + 1
        return {k: Fraction(c, self.frame_slots) for k, c in count.items()}

    def repeat(self, times: int) -> "Schedule":
        return Schedule(self.frame_slots * times, self.slots * times)

    def dumps(self) -> str:
        lines = []
        for k, s in enumerate(self.slots):
            body = ", ".join(f"{t}->{r}" for t, r in sorted(s))
            lines.append(f"slot {k}: {body}".rstrip())
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def loads(cls, text: str) -> "Schedule":
        table: dict[int, set] = {}
        for i, ln in enumerate(text.splitlines(), start=1):
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            head, sep, body = ln.partition(":")
            parts = head.split()
            if not sep or len(parts) != 2 or parts[0] != "slot":
                raise ValueError(f"line {i}: expected 'slot <k>: <tx>-><rx>, ...'")
            k = int(parts[1])
            links = set()
            for item in body.split(","):
                item = item.strip()
                if item:
                    t, arrow, r = item.partition("->")
                    if not arrow:
                        raise ValueError(f"line {i}: bad link {item!r}")
                    links.add((int(t), int(r)))
            table.setdefault(k, set()).update(links)
        n = max(table) + 1 if table else 0
        return cls(n, tuple(frozenset(table.get(k, ())) for k in range(n)))


@dataclass
class AirtimeAccount:
    link_airtime: dict[LinkKey, Fraction]
    ring_airtime: dict[int, Fraction]  # fraction of slots in which any ring-i node transmits


def airtime_account(topo: Topology, schedule: Schedule) -> AirtimeAccount:
    hops = topo.ring_index
    ring_slots: dict[int, int] = {}
    for s in schedule.slots:
        for ring in {hops[t] for t, _ in s}:
            ring_slots[ring] = ring_slots.get(ring, 0) + 1
    n = schedule.frame_slots or 1
    return AirtimeAccount(schedule.airtime(),
                          {r: Fraction(c, n) for r, c in sorted(ring_slots.items())})


@dataclass
class CapacityReport:
    bound_fraction: Fraction
    ring2_concurrency: int
    binding_constraint: str
    equal_length: bool = False

    def as_text(self) -> str:
        return "\n".join([
            f"bound_fraction: {float(self.bound_fraction):.4f}",
            f"ring2_concurrency: {self.ring2_concurrency}",
            f"equal_length: {str(self.equal_length).lower()}",
            f"binding_constraint: {self.binding_constraint}",
        ])


def _equal_length(topo: Topology, tol: float = 1e-6) -> bool:
    lens = [l.length for l in topo.route_links()]
    return bool(lens) and max(lens) - min(lens) <= tol * max(lens)


def upper_bound(topo: Topology, config: RadioConfig) -> CapacityReport:
    """Ring-2 bound k/(k+1) with k the largest set of 2-hop links that can
    be active together.

    The sink can be fed only by 1-hop links, which cannot overlap each
    other, and every 1-hop link's traffic must first cross ring 2, which
    needs at least 1/k of the frame per unit of delivered airtime.
    """
    hops = topo.ring_index
    close = [s for s in topo.sources if hops.get(s, 0) < 2]
    if close:
        raise ValueError(f"sources {close} are fewer than 2 hops from the sink")
    hn = hidden_node_pairs(topo, config, topo.route_links())
    if hn:
        raise ValueError(
            f"{len(hn)} hidden-node pairs at cs_range={config.cs_range:g}; "
            "the bound assumes a hidden-node-free configuration")
    k = len(max_concurrent_set(topo, config, ring_links(topo, 2)))
    eq = _equal_length(topo)
    why = (f"at most {k} ring-2 links active at once; 1-hop links are mutually "
           f"exclusive at the sink, so x1 + x2/{k} <= 1")
    return CapacityReport(Fraction(k, k + 1), k, why, eq)


def chain_capacity(n_sources: int) -> Fraction:
    """Uniform-rate capacity of a chain where all n nodes generate: n/(3n-3)."""
    if n_sources < 2:
        raise ValueError("chain_capacity needs n >= 2")
    return Fraction(n_sources, 3 * n_sources - 3)


# -- verification ----------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    slot: int
    a: LinkKey
    b: Optional[LinkKey]
    kind: str          # inequality | sensing | half_duplex | sir
    index: int = 0     # failed inequality (1-8) for kind == inequality

    def __str__(self):
        other = f" vs {self.b[0]}->{self.b[1]}" if self.b else ""
        tag = f" #{self.index}" if self.index else ""
        return f"slot {self.slot}: {self.a[0]}->{self.a[1]}{other} {self.kind}{tag}"


def _check_links(topo: Topology, schedule: Schedule) -> None:
    known = {l.key for l in topo.links}
    bad = sorted(schedule.links - known)
    if bad:
        raise ValueError(f"schedule uses links not in the topology: {bad}")


def _worst_power(pos, other: LinkKey, at: int, config: RadioConfig) -> float:
    a = config.path_loss_exp
    return max(received_power(config.tx_power, pos[n].dist(pos[at]), a) for n in other)


def verify_schedule(topo: Topology, schedule: Schedule, config: RadioConfig,
                    mode: str = "pairwise") -> list[Violation]:
    """Empty list iff every slot is feasible.

    pairwise: all eight inequalities for each co-scheduled pair.
    aggregate: at each receiving end (DATA at rx, ACK at tx) the summed
    worst-case power of the other links' endpoints must keep SIR above
    the threshold. Both modes also require co-scheduled transmitters to be
    out of carrier-sensing range and links not to share a node.
    """
    if mode not in ("pairwise", "aggregate"):
        raise ValueError("mode must be 'pairwise' or 'aggregate'")
    _check_links(topo, schedule)
    pos = topo.positions
    out: list[Violation] = []
    for k, s in enumerate(schedule.slots):
        links = [make_link(t, r, pos) for t, r in sorted(s)]
        for i, a in enumerate(links):
            for b in links[i + 1:]:
                if {a.tx, a.rx} & {b.tx, b.rx}:
                    out.append(Violation(k, a.key, b.key, "half_duplex"))
                    continue
                if pos[a.tx].dist(pos[b.tx]) <= config.cs_range:
                    out.append(Violation(k, a.key, b.key, "sensing"))
                if mode == "pairwise":
                    for idx in violated_inequalities(a, b, pos, config.delta):
                        out.append(Violation(k, a.key, b.key, "inequality", idx))
        if mode == "aggregate":
            for a in links:
                others = [b.key for b in links if b is not a
                          and not {a.tx, a.rx} & {b.tx, b.rx}]
                if not others:
                    continue
                for end in (a.rx, a.tx):
                    sig = received_power(config.tx_power, a.length, config.path_loss_exp)
                    noise = sum(_worst_power(pos, o, end, config) for o in others)
                    if sig / noise < config.sir_threshold:
                        out.append(Violation(k, a.key, None, "sir"))
                        break
    return out


# -- throughput ------------------------------------------------------------

class InfeasibleFlowError(ValueError):
    pass


@dataclass
class ThroughputReport:
    per_flow: dict[int, Fraction]
    aggregate: Fraction
    link_flow: dict[LinkKey, Fraction] = field(default_factory=dict)


def _tree(topo: Topology):
    nodes = topo.active_nodes()
    children: dict[int, list[int]] = {n: [] for n in nodes}
    for v in nodes:
        if v != topo.sink:
            nxt = topo.routes.get(v)
            if nxt is None or nxt not in children:
                raise InfeasibleFlowError(f"node {v} has no route to the sink")
            children[nxt].append(v)
    order = sorted((v for v in nodes if v != topo.sink),
                   key=lambda v: (-topo.route_hops(v), v))
    return children, order


def schedule_throughput(topo: Topology, schedule: Schedule, config: RadioConfig,
                        fairness: str = "uniform") -> ThroughputReport:
    """Sustainable many-to-one rates (fractions of L unless link_capacity != 1).

    uniform: every source gets the same rate, limited by the most loaded
    link. max: total delivery maximised greedily from the leaves inward,
    forwarded traffic first. Flow is conserved exactly at every relay.
    """
    if fairness not in ("uniform", "max"):
        raise ValueError("fairness must be 'uniform' or 'max'")
    _check_links(topo, schedule)
    L = Fraction(config.link_capacity).limit_denominator(10**9)
    air = schedule.airtime()
    children, order = _tree(topo)
    cap = {v: air.get((v, topo.routes[v]), Fraction(0)) * L for v in order}
    gen = set(topo.sources)

    per_flow: dict[int, Fraction] = {}
    out_flow: dict[int, Fraction] = {}
    if fairness == "uniform":
        count = {v: (1 if v in gen else 0) for v in order}
        for v in order:
            for c in children[v]:
                count[v] += count[c]
        loads = [cap[v] / count[v] for v in order if count[v]]
        r = min(loads) if loads else Fraction(0)
        per_flow = {s: r for s in gen}
        out_flow = {v: r * count[v] for v in order}
    else:
        for v in order:
            inflow = sum((out_flow[c] for c in children[v]), Fraction(0))
            if v in gen:
                out_flow[v] = cap[v]
                local = cap[v] - inflow
                if local < 0:
                    scale = cap[v] / inflow
                    _scale_subtree(children, v, scale, out_flow, per_flow)
                    local = Fraction(0)
                per_flow[v] = local
            else:
                out_flow[v] = min(cap[v], inflow)
                if inflow > cap[v]:
                    _scale_subtree(children, v, cap[v] / inflow, out_flow, per_flow)
    for v in order:
        inflow = sum((out_flow[c] for c in children[v]), Fraction(0))
        local = per_flow.get(v, Fraction(0)) if v in gen else Fraction(0)
        if inflow + local != out_flow[v] or out_flow[v] > cap[v]:
            raise InfeasibleFlowError(f"flow conservation fails at node {v}")
    agg = sum((out_flow[c] for c in children[topo.sink]), Fraction(0))
    if agg != sum(per_flow.values(), Fraction(0)):
        raise InfeasibleFlowError("sink inflow differs from total generated rate")
    link_flow = {(v, topo.routes[v]): out_flow[v] for v in order}
    return ThroughputReport(dict(sorted(per_flow.items())), agg, link_flow)


def _scale_subtree(children, v, scale, out_flow, per_flow):
    stack = list(children[v])
    while stack:
        u = stack.pop()
        out_flow[u] *= scale
        if u in per_flow:
            per_flow[u] *= scale
        stack.extend(children[u])


def counting_identity(topo: Topology, schedule: Schedule) -> tuple[Fraction, int]:
    """(x1 + x2/k, k) with x_i the summed ring-i link airtime and k the
    largest number of ring-2 links sharing a slot. Any feasible schedule
    keeps the first value <= 1."""
    hops = topo.ring_index
    air = schedule.airtime()
    x1 = sum((a for (t, _), a in air.items() if hops[t] == 1), Fraction(0))
    x2 = sum((a for (t, _), a in air.items() if hops[t] == 2), Fraction(0))
    k = max((sum(1 for t, _ in s if hops[t] == 2) for s in schedule.slots), default=0)
    return (x1 + (x2 / k if k else 0)), k


# -- fixtures --------------------------------------------------------------

FIG9_PATTERN = ((1, 0, 2), (2, 0, 1))
FIG12_PATTERN = ((1, 0, 2, 3), (2, 0, 3, 1), (3, 0, 1, 2))


def _tiled(patterns, hops: int, frame: int) -> Schedule:
    assign = {}
    for j, pat in enumerate(patterns):
        for k in range(1, hops + 1):
            nid = canonical_id(j, k, hops)
            rx = 0 if k == 1 else nid - 1
            assign[(nid, rx)] = [pat[(k - 1) % len(pat)]]
    return Schedule.from_assignment(assign, frame)


def fig9_schedule(hops_per_chain: int = 7) -> Schedule:
    """Three-slot pattern for two chains: both 2-hop links share slot 0,
    the 1-hop links take slots 1 and 2, repeated outward every three hops."""
    return _tiled(FIG9_PATTERN, hops_per_chain, 3)


def fig12_schedule(hops_per_chain: int = 2) -> Schedule:
    """Four-slot pattern for three chains: all 2-hop links share slot 0,
    each 1-hop link owns one of slots 1-3, tiled outward with period 4."""
    return _tiled(FIG12_PATTERN, hops_per_chain, 4)


def chain_schedule(n: int) -> Schedule:
    """Perfect schedule for an n-hop chain where every node generates.

    Frame of 3n-3 slots; link i (node i -> i-1) gets n-i+1 slots. Links
    1-3 take disjoint blocks and link i+3 reuses a prefix of link i's
    slots, three hops away.
    """
    if n < 2:
        raise ValueError("chain_schedule needs n >= 2")
    frame = 3 * n - 3
    slots: dict[int, list[int]] = {1: list(range(0, n)),
                                   2: list(range(n, 2 * n - 1))}
    if n >= 3:
        slots[3] = list(range(2 * n - 1, 3 * n - 3))
    for i in range(4, n + 1):
        slots[i] = slots[i - 3][: n - i + 1]
    return Schedule.from_assignment({(i, i - 1): s for i, s in slots.items()}, frame)


__all__ = [
    "Schedule", "AirtimeAccount", "airtime_account", "CapacityReport", "upper_bound",
    "chain_capacity", "Violation", "verify_schedule", "InfeasibleFlowError",
    "ThroughputReport", "schedule_throughput", "counting_identity", "fig9_schedule",
    "fig12_schedule", "chain_schedule",
]
