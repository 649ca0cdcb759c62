"""Topology generators (canonical, linear, random-disk, centric, manifold),
static min-hop routing and the line-oriented `topology v1` text format."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .geometry import DirectedLink, Point2D, make_link
from .rng import rng_for

log = logging.getLogger(__name__)

DECIMALS = 6


class NodeRole(str, Enum):
    SOURCE = "source"
    RELAY = "relay"
    SINK = "sink"
    SOURCE_AND_RELAY = "source_and_relay"

    @property
    def generates(self) -> bool:
        return self in (NodeRole.SOURCE, NodeRole.SOURCE_AND_RELAY)


class UnreachableError(ValueError):
    def __init__(self, nodes):
        self.nodes = sorted(nodes)
        super().__init__(f"sink unreachable from nodes {self.nodes}")


def _q(v: float) -> float:
    return round(float(v), DECIMALS) + 0.0


def _pt(x: float, y: float) -> Point2D:
    return Point2D(_q(x), _q(y))


@dataclass(frozen=True)
class Topology:
    positions: Mapping[int, Point2D]
    roles: Mapping[int, NodeRole]
    links: tuple[DirectedLink, ...]
    sink: int
    routes: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        sinks = [n for n, r in self.roles.items() if r is NodeRole.SINK]
        if sinks != [self.sink]:
            raise ValueError(f"exactly one sink expected, found {sinks}")
        if set(self.positions) != set(self.roles):
            raise ValueError("positions and roles must cover the same node ids")

    @property
    def nodes(self) -> list[int]:
        return sorted(self.positions)

    @property
    def sources(self) -> list[int]:
        return sorted(n for n, r in self.roles.items() if r.generates)

    @cached_property
    def adjacency(self) -> dict[int, list[int]]:
        adj: dict[int, set[int]] = {n: set() for n in self.positions}
        for l in self.links:
            adj[l.tx].add(l.rx)
            adj[l.rx].add(l.tx)
        return {n: sorted(v) for n, v in adj.items()}

    @cached_property
    def ring_index(self) -> dict[int, int]:
        """Shortest-path hop count to the sink over the link graph."""
        hops = {self.sink: 0}
        q = deque([self.sink])
        while q:
            u = q.popleft()
            for v in self.adjacency[u]:
                if v not in hops:
                    hops[v] = hops[u] + 1
                    q.append(v)
        return hops

    def route_hops(self, node: int) -> int:
        n = 0
        while node != self.sink:
            node = self.routes[node]
            n += 1
            if n > len(self.positions):
                raise ValueError("routing loop")
        return n

    def path(self, node: int) -> list[int]:
        out = [node]
        while node != self.sink:
            node = self.routes[node]
            out.append(node)
            if len(out) > len(self.positions) + 1:
                raise ValueError("routing loop")
        return out

    def route_links(self) -> list[DirectedLink]:
        """Links that carry traffic: every node on some source's path to its next hop."""
        used = set()
        for s in self.sources:
            p = self.path(s)
            used.update(zip(p[:-1], p[1:]))
        return [make_link(t, r, self.positions) for t, r in sorted(used)]

    def active_nodes(self) -> list[int]:
        used = {self.sink}
        for s in self.sources:
            used.update(self.path(s))
        return sorted(used)

    def max_link_length(self, links: Optional[Iterable[DirectedLink]] = None) -> float:
        links = self.links if links is None else list(links)
        return max((l.length for l in links), default=0.0)

    def validate(self, tx_range: float) -> None:
        for l in self.links:
            if l.length > tx_range * (1 + 1e-9) + 1e-6:
                raise ValueError(f"link {l} has length {l.length} > tx_range {tx_range}")
        for s in self.sources:
            self.path(s)

    def with_routes(self, routes: Mapping[int, int]) -> "Topology":
        return Topology(dict(self.positions), dict(self.roles), self.links,
                        self.sink, dict(routes))

    def restrict(self, keep: Iterable[int], links: Optional[Iterable[DirectedLink]] = None,
                 routes: Optional[Mapping[int, int]] = None) -> "Topology":
        """Sub-topology on `keep` nodes (inactive nodes are switched off)."""
        keep = set(keep) | {self.sink}
        if links is None:
            links = [l for l in self.links if l.tx in keep and l.rx in keep]
        if routes is None:
            routes = {n: h for n, h in self.routes.items() if n in keep and h in keep}
        return Topology({n: self.positions[n] for n in sorted(keep)},
                        {n: self.roles[n] for n in sorted(keep)},
                        tuple(links), self.sink, dict(routes))

    def __eq__(self, other):
        if not isinstance(other, Topology):
            return NotImplemented
        return (dict(self.positions) == dict(other.positions)
                and dict(self.roles) == dict(other.roles)
                and sorted(l.key for l in self.links) == sorted(l.key for l in other.links)
                and self.sink == other.sink
                and dict(self.routes) == dict(other.routes))

    __hash__ = None


# -- serialization ---------------------------------------------------------

def dumps(topo: Topology) -> str:
    lines = ["topology v1"]
    for n in topo.nodes:
        p = topo.positions[n]
        lines.append(f"node {n} {p.x:.{DECIMALS}f} {p.y:.{DECIMALS}f} {topo.roles[n].value}")
    for l in sorted(topo.links, key=lambda l: l.key):
        lines.append(f"link {l.tx} {l.rx}")
    for n in sorted(topo.routes):
        lines.append(f"route {n} {topo.routes[n]}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> Topology:
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows or rows[0] != ["topology", "v1"]:
        raise ValueError("missing 'topology v1' header")
    positions, roles, pairs, routes = {}, {}, [], {}
    for i, row in enumerate(rows[1:], start=2):
        kind = row[0]
        try:
            if kind == "node" and len(row) == 5:
                n = int(row[1])
                positions[n] = Point2D(float(row[2]), float(row[3]))
                roles[n] = NodeRole(row[4])
            elif kind == "link" and len(row) == 3:
                pairs.append((int(row[1]), int(row[2])))
            elif kind == "route" and len(row) == 3:
                routes[int(row[1])] = int(row[2])
            else:
                raise ValueError(kind)
        except ValueError as e:
            raise ValueError(f"line {i}: cannot parse {' '.join(row)!r}") from e
    sinks = [n for n, r in roles.items() if r is NodeRole.SINK]
    if len(sinks) != 1:
        raise ValueError(f"expected one sink, found {len(sinks)}")
    links = tuple(make_link(t, r, positions) for t, r in pairs)
    return Topology(positions, roles, links, sinks[0], routes)


def save(topo: Topology, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(topo))


def load(path) -> Topology:
    with open(path) as fh:
        return loads(fh.read())


# -- routing ---------------------------------------------------------------

def route_min_hop(topo: Topology, nodes: Optional[Iterable[int]] = None) -> dict[int, int]:
    """Breadth-first next hops toward the sink.

    Among equally short candidates the next hop closest to the sink wins,
    then the smallest node id.
    """
    hops = topo.ring_index
    sink_pos = topo.positions[topo.sink]
    missing = [s for s in topo.sources if s not in hops]
    if missing:
        raise UnreachableError(missing)
    routes = {}
    for v in (topo.nodes if nodes is None else nodes):
        if v == topo.sink or v not in hops:
            continue
        cands = [u for u in topo.adjacency[v] if hops.get(u) == hops[v] - 1]
        routes[v] = min(cands, key=lambda u: (topo.positions[u].dist(sink_pos), u))
    return routes


def _finish(positions, roles, pairs, sink=0) -> Topology:
    links = tuple(make_link(t, r, positions) for t, r in pairs)
    topo = Topology(positions, roles, links, sink)
    return topo.with_routes(route_min_hop(topo))


def unit_disk_pairs(positions: Mapping[int, Point2D], tx_range: float) -> list[tuple[int, int]]:
    ids = sorted(positions)
    xy = np.array([positions[i] for i in ids], dtype=float)
    d = np.hypot(xy[:, None, 0] - xy[None, :, 0], xy[:, None, 1] - xy[None, :, 1])
    ii, jj = np.nonzero((d <= tx_range) & ~np.eye(len(ids), dtype=bool))
    return [(ids[i], ids[j]) for i, j in zip(ii, jj)]


# -- canonical family -------------------------------------------------------

@dataclass(frozen=True)
class CanonicalSpec:
    """N straight chains of n hops radiating from the sink.

    `ring_spacings[i]` is the distance between (i+1)-hop and i-hop nodes
    (d0 for the sink-adjacent link).
    """

    num_chains: int
    hops_per_chain: int
    ring_spacings: tuple[float, ...]
    chain_angles: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if self.num_chains < 1 or self.hops_per_chain < 1:
            raise ValueError("need at least one chain of at least one hop")
        sp = tuple(float(s) for s in self.ring_spacings)
        if len(sp) == 1:
            sp = sp * self.hops_per_chain
        elif len(sp) < self.hops_per_chain:
            sp = sp + (sp[-1],) * (self.hops_per_chain - len(sp))
        sp = sp[: self.hops_per_chain]
        if any(not s > 0 for s in sp):
            raise ValueError("ring spacings must be positive")
        object.__setattr__(self, "ring_spacings", sp)
        if self.chain_angles is None:
            ang = tuple(2 * math.pi * j / self.num_chains for j in range(self.num_chains))
            object.__setattr__(self, "chain_angles", ang)
        if len(self.chain_angles) != self.num_chains:
            raise ValueError("one angle per chain required")
        wrapped = sorted(round(a % (2 * math.pi), 12) for a in self.chain_angles)
        if len(set(wrapped)) != len(wrapped):
            raise ValueError("chain angles must be distinct modulo 2*pi")

    @classmethod
    def equal(cls, num_chains: int, hops: int, d: float, angles=None) -> "CanonicalSpec":
        return cls(num_chains, hops, (d,), angles)

    def ring_radius(self, i: int) -> float:
        return sum(self.ring_spacings[:i])


def table1_spec(hops: int = 7) -> CanonicalSpec:
    """Three chains with d0 = 250 m, d1 = 242 m, d_i = 250 m beyond."""
    return CanonicalSpec(3, hops, (250.0, 242.0, 250.0))


FIG12_RHO = 0.973


def fig12_spec(hops: int = 2, d0: float = 250.0) -> CanonicalSpec:
    """Three chains with d1 = 0.973 d0: close to the largest d1 that keeps
    the three ring-2 links compatible (CSRange window up to 3.417 d0)."""
    return CanonicalSpec(3, hops, (d0, FIG12_RHO * d0, d0))


def fig15_spec(hops: int = 8, d: float = 250.0) -> CanonicalSpec:
    return CanonicalSpec(3, hops, (d, 0.9 * d, d))


def canonical_id(chain: int, hop: int, hops_per_chain: int) -> int:
    return 1 + chain * hops_per_chain + (hop - 1)


def build_canonical(spec: CanonicalSpec) -> Topology:
    n = spec.hops_per_chain
    positions = {0: Point2D(0.0, 0.0)}
    roles = {0: NodeRole.SINK}
    pairs = []
    for j, ang in enumerate(spec.chain_angles):
        ca, sa = math.cos(ang), math.sin(ang)
        for i in range(1, n + 1):
            r = spec.ring_radius(i)
            nid = canonical_id(j, i, n)
            positions[nid] = _pt(r * ca, r * sa)
            roles[nid] = NodeRole.SOURCE if i == n else NodeRole.RELAY
            pairs.append((nid, 0 if i == 1 else nid - 1))
    if len(set(positions.values())) != len(positions):
        raise ValueError("spacings/angles place distinct nodes at the same position")
    return _finish(positions, roles, pairs)


CHAIN_POLICIES = ("all", "far", "from3")


def build_linear_chain(n: int, d: float, policy: str = "all") -> Topology:
    """n+1 collinear nodes; node 0 is the sink.

    policy: "all" -> nodes 1..n generate traffic, "far" -> only node n,
    "from3" -> nodes i >= 3 only.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if policy not in CHAIN_POLICIES:
        raise ValueError(f"policy must be one of {CHAIN_POLICIES}")
    positions = {i: _pt(i * d, 0.0) for i in range(n + 1)}
    roles = {0: NodeRole.SINK}
    for i in range(1, n + 1):
        src = policy == "all" or (policy == "far" and i == n) or (policy == "from3" and i >= 3)
        if src:
            roles[i] = NodeRole.SOURCE if i == n else NodeRole.SOURCE_AND_RELAY
        else:
            roles[i] = NodeRole.RELAY
    if not any(r.generates for r in roles.values()):
        roles[n] = NodeRole.SOURCE
    return _finish(positions, roles, [(i, i - 1) for i in range(1, n + 1)])


DEFAULT_BEND = 0.8 * math.pi


def build_two_chain_asym(d: float = 250.0, bend_angle: float = DEFAULT_BEND,
                         hops: int = 7) -> Topology:
    """Two equal-spacing chains meeting at the sink at angle `bend_angle`."""
    if not 0 < bend_angle <= math.pi:
        raise ValueError("bend_angle must lie in (0, pi]")
    return build_canonical(CanonicalSpec(2, hops, (d,), (0.0, bend_angle)))


# -- random families -------------------------------------------------------

def build_random_disk(disk_radius: float = 1.0, tx_range: float = 0.4,
                      n_boundary_sources: int = 6, seed: int = 0) -> Topology:
    """Sink at the centre, sources evenly on the boundary, each grown a chain
    of random relays toward the sink until one lands within range of it."""
    if not tx_range > 0:
        raise ValueError("tx_range must be > 0")
    rng = rng_for(seed, "random_disk")
    positions = {0: Point2D(0.0, 0.0)}
    roles = {0: NodeRole.SINK}
    nid = 1
    for k in range(n_boundary_sources):
        a = 2 * math.pi * k / n_boundary_sources
        p = _pt(disk_radius * math.cos(a), disk_radius * math.sin(a))
        positions[nid], roles[nid] = p, NodeRole.SOURCE
        nid += 1
        for _ in range(10_000):
            r = math.hypot(p.x, p.y)
            if r <= tx_range:
                break
            bearing = math.atan2(-p.y, -p.x) + rng.uniform(-math.pi / 3, math.pi / 3)
            step = rng.uniform(0.5 * tx_range, tx_range)
            p = _pt(p.x + step * math.cos(bearing), p.y + step * math.sin(bearing))
            positions[nid], roles[nid] = p, NodeRole.RELAY
            nid += 1
    return _finish(positions, roles, unit_disk_pairs(positions, tx_range))


def _annulus_points(rng, n, r_in, r_out, min_sep, max_attempts):
    pts: list[tuple[float, float]] = []
    attempts = 0
    while len(pts) < n:
        attempts += 1
        if attempts > max_attempts:
            raise RuntimeError(
                f"could only place {len(pts)} of {n} nodes with min_sep={min_sep} "
                f"after {max_attempts} attempts")
        r = math.sqrt(rng.uniform(r_in ** 2, r_out ** 2))
        a = rng.uniform(0, 2 * math.pi)
        x, y = r * math.cos(a), r * math.sin(a)
        if all((x - px) ** 2 + (y - py) ** 2 >= min_sep ** 2 for px, py in pts):
            pts.append((x, y))
    return pts


def _with_outer(inner_pos: dict, inner_roles: dict, outer_pts, tx_range: float) -> Topology:
    positions, roles = dict(inner_pos), dict(inner_roles)
    nid = max(positions) + 1
    for x, y in outer_pts:
        positions[nid] = _pt(x, y)
        roles[nid] = NodeRole.SOURCE_AND_RELAY
        nid += 1
    pairs = unit_disk_pairs(positions, tx_range)
    topo = Topology(positions, roles, tuple(make_link(t, r, positions) for t, r in pairs), 0)
    hops = topo.ring_index
    cut = [n for n in topo.nodes if n not in hops]
    if cut:
        log.info("dropping %d nodes with no path to the sink", len(cut))
        keep = [n for n in topo.nodes if n in hops]
        topo = topo.restrict(keep)
    return topo.with_routes(route_min_hop(topo))


def centric_spec(inner_radius: float = 980.0, d0: float = 200.0) -> CanonicalSpec:
    """Three-chain core (d1 = 0.968 d0 as in the 242/250 design) filling the inner circle."""
    d1 = 0.968 * d0
    hops = 1 + int((inner_radius - d0) // d1 + 1e-9)
    return CanonicalSpec(3, hops, (d0, d1))


def build_centric(outer_radius: float = 2000.0, inner_radius: float = 980.0,
                  canonical: Optional[CanonicalSpec] = None, min_sep: float = 125.0,
                  n_outer: int = 284, seed: int = 0, tx_range: float = 250.0,
                  max_attempts: int = 200_000) -> Topology:
    """Canonical relay core inside `inner_radius`, random source+relay nodes outside."""
    spec = canonical or centric_spec(inner_radius)
    if spec.ring_radius(spec.hops_per_chain) > inner_radius:
        raise ValueError("canonical core does not fit inside the inner circle")
    core = build_canonical(spec)
    inner_roles = {n: (NodeRole.SINK if n == 0 else NodeRole.RELAY) for n in core.nodes}
    rng = rng_for(seed, "centric_outer")
    pts = _annulus_points(rng, n_outer, inner_radius, outer_radius, min_sep, max_attempts)
    return _with_outer(dict(core.positions), inner_roles, pts, tx_range)


def manifold_core(inner_radius: float = 1026.0, d0: float = 200.0,
                  branch_half_angle: float = math.pi / 12, central_hops: int = 2,
                  branch_hops: int = 4, jitter: float = 0.0, seed: int = 0):
    """Positions of the two-layer core: three central chains that each split
    into two straight branches. Returns (positions, roles)."""
    d1 = 0.968 * d0
    r_split = d0 + d1 * (central_hops - 1)
    # longest step that keeps the branch tips inside the inner circle
    reach = inner_radius - 0.02 * d0
    c = math.cos(branch_half_angle)
    t = -r_split * c + math.sqrt((r_split * c) ** 2 - r_split ** 2 + reach ** 2)
    step = min(d0, t / branch_hops)
    positions = {0: Point2D(0.0, 0.0)}
    roles = {0: NodeRole.SINK}
    nid = 1
    for j in range(3):
        a = 2 * math.pi * j / 3
        ca, sa = math.cos(a), math.sin(a)
        for i in range(1, central_hops + 1):
            r = d0 + d1 * (i - 1)
            positions[nid], roles[nid] = (r * ca, r * sa), NodeRole.RELAY
            nid += 1
        sx, sy = r_split * ca, r_split * sa
        for side in (-1, 1):
            b = a + side * branch_half_angle
            for k in range(1, branch_hops + 1):
                positions[nid] = (sx + k * step * math.cos(b), sy + k * step * math.sin(b))
                roles[nid] = NodeRole.RELAY
                nid += 1
    rng = rng_for(seed, "manifold_jitter")
    out = {}
    for n, p in positions.items():
        x, y = p
        if n != 0 and jitter > 0:
            rad = jitter * d0 * rng.uniform(0, 1)
            ang = rng.uniform(0, 2 * math.pi)
            x, y = x + rad * math.cos(ang), y + rad * math.sin(ang)
        out[n] = _pt(x, y)
    return out, roles


def build_manifold(outer_radius: float = 2000.0, inner_radius: float = 1026.0,
                   seed: int = 0, n_outer: int = 269, min_sep: float = 125.0,
                   d0: float = 200.0, tx_range: float = 250.0, jitter: float = 0.0,
                   branch_half_angle: float = math.pi / 12,
                   max_attempts: int = 200_000) -> Topology:
    """Manifold core (31 inner nodes including the sink) plus random outer sources.

    `jitter` displaces every core relay by up to jitter*d0 in a random
    direction; the outer layout depends only on `seed`.
    """
    pos, roles = manifold_core(inner_radius, d0, branch_half_angle, jitter=jitter, seed=seed)
    rng = rng_for(seed, "manifold_outer")
    pts = _annulus_points(rng, n_outer, inner_radius, outer_radius, min_sep, max_attempts)
    return _with_outer(pos, roles, pts, tx_range)


def build_random_benchmark(outer_radius: float = 2000.0, inner_radius: float = 980.0,
                           n_inner: int = 146, n_outer: int = 284, min_sep: float = 125.0,
                           seed: int = 0, tx_range: float = 250.0,
                           max_attempts: int = 200_000) -> Topology:
    """Baseline: the inner circle holds `n_inner` unconstrained random relays."""
    rng = rng_for(seed, "benchmark_inner")
    positions = {0: Point2D(0.0, 0.0)}
    roles = {0: NodeRole.SINK}
    for k in range(1, n_inner + 1):
        r = inner_radius * math.sqrt(rng.uniform(0, 1))
        a = rng.uniform(0, 2 * math.pi)
        positions[k], roles[k] = _pt(r * math.cos(a), r * math.sin(a)), NodeRole.RELAY
    pts = _annulus_points(rng_for(seed, "benchmark_outer"), n_outer, inner_radius,
                          outer_radius, min_sep, max_attempts)
    return _with_outer(positions, roles, pts, tx_range)


def build_bent_chains(num_chains: int, hops: int, d: float, seed: int = 0,
                      max_bend: float = math.pi / 6) -> Topology:
    """Equal-link-length chains that turn by up to `max_bend` at every relay."""
    rng = rng_for(seed, "bent_chains")
    rot = rng.uniform(0, 2 * math.pi)
    positions = {0: Point2D(0.0, 0.0)}
    roles = {0: NodeRole.SINK}
    pairs = []
    for j in range(num_chains):
        heading = rot + 2 * math.pi * j / num_chains
        x = y = 0.0
        for i in range(1, hops + 1):
            if i > 1:
                heading += rng.uniform(-max_bend, max_bend)
            x, y = x + d * math.cos(heading), y + d * math.sin(heading)
            nid = canonical_id(j, i, hops)
            positions[nid] = _pt(x, y)
            roles[nid] = NodeRole.SOURCE if i == hops else NodeRole.RELAY
            pairs.append((nid, 0 if i == 1 else nid - 1))
    return _finish(positions, roles, pairs)


FIG17_SPUR_ANGLE = math.radians(116.0)


def build_fig17(d0: float = 250.0) -> Topology:
    """Three-chain network of `fig12_spec(2)` plus two relay spurs.

    Spur A hangs one link off the 2-hop node of chain 0 and spur B is its
    mirror image off chain 1. The links from the two hubs into the spurs
    conflict although their transmitters are 3.417 d0 apart, so making every
    link hidden-node free needs a CSRange above the window that supports
    3/4 capacity.
    """
    base = build_canonical(fig12_spec(2, d0))
    pos = dict(base.positions)
    hub = pos[canonical_id(0, 2, 2)]
    a = _pt(hub.x + d0 * math.cos(FIG17_SPUR_ANGLE), hub.y + d0 * math.sin(FIG17_SPUR_ANGLE))
    m = 2 * math.pi / 3    # reflection about the 60 degree bisector
    b = _pt(a.x * math.cos(m) + a.y * math.sin(m), a.x * math.sin(m) - a.y * math.cos(m))
    ia, ib = max(pos) + 1, max(pos) + 2
    pos[ia], pos[ib] = a, b
    roles = dict(base.roles)
    roles[ia] = roles[ib] = NodeRole.RELAY
    spur = [p for p in unit_disk_pairs(pos, d0 + 1e-3) if ia in p or ib in p]
    pairs = [l.key for l in base.links] + spur
    return _finish(pos, roles, pairs)
