"""Link conflict analysis: compatibility/sensing relations, hidden-node pairs,
minimal hidden-node-free CSRange, ring concurrency and aggregate SIR."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from .geometry import DirectedLink, RadioConfig, received_power
from .topology import Topology


class HNCause(str, Enum):
    INSUFFICIENT_CSRANGE = "insufficient_csrange"
    NO_RESTART_CAPTURE = "no_restart_capture"


@dataclass(frozen=True)
class HiddenNodePair:
    aggressor: DirectedLink
    victim: DirectedLink
    cause: HNCause


@dataclass
class CompatibilityGraph:
    links: list[DirectedLink]
    compatible: np.ndarray  # bool (L, L), symmetric, irreflexive
    senses: np.ndarray      # bool (L, L), symmetric: transmitters within CSRange
    tx_dist: np.ndarray

    def index(self, link: DirectedLink) -> int:
        return self.links.index(link)

    def compatible_pairs(self) -> list[tuple[DirectedLink, DirectedLink]]:
        ii, jj = np.nonzero(np.triu(self.compatible, 1))
        return [(self.links[i], self.links[j]) for i, j in zip(ii, jj)]


def _endpoints(topo: Topology, links: Sequence[DirectedLink]):
    pos = topo.positions
    t = np.array([pos[l.tx] for l in links], dtype=float).reshape(-1, 2)
    r = np.array([pos[l.rx] for l in links], dtype=float).reshape(-1, 2)
    return t, r


def _dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.hypot(a[:, None, 0] - b[None, :, 0], a[:, None, 1] - b[None, :, 1])


def violation_matrix(topo: Topology, links: Sequence[DirectedLink],
                     delta: float) -> tuple[np.ndarray, np.ndarray]:
    """(violated, tx_dist) for every link pair.

    All eight inequalities compare one of the four cross-link endpoint
    distances against (1+Δ) times one link's length, so a pair violates
    the set iff the smallest cross distance is <= (1+Δ) * the longer link.
    """
    t, r = _endpoints(topo, links)
    length = np.hypot(*(t - r).T) if len(links) else np.zeros(0)
    tt, rr, tr, rt = _dist(t, t), _dist(r, r), _dist(t, r), _dist(r, t)
    cross = np.minimum(np.minimum(tt, rr), np.minimum(tr, rt))
    lim = (1.0 + delta) * np.maximum(length[:, None], length[None, :])
    return ~(cross > lim), tt


def compatibility_graph(topo: Topology, config: RadioConfig,
                        links: Optional[Sequence[DirectedLink]] = None) -> CompatibilityGraph:
    links = list(topo.links if links is None else links)
    viol, tx = violation_matrix(topo, links, config.delta)
    comp = ~viol
    np.fill_diagonal(comp, False)
    senses = tx <= config.cs_range
    np.fill_diagonal(senses, False)
    return CompatibilityGraph(links, comp, senses, tx)


def hidden_node_pairs(topo: Topology, config: RadioConfig,
                      links: Optional[Sequence[DirectedLink]] = None) -> list[HiddenNodePair]:
    """Ordered (aggressor, victim) link pairs that can collide despite carrier sensing.

    insufficient_csrange: transmitters cannot sense each other and the pair
    violates the interference inequalities. no_restart_capture (only when
    rs_mode is off): transmitters cannot sense each other but the victim's
    receiver lies within the aggressor's CSRange, so it locks onto the
    aggressor's preamble and never hears its own frame.
    """
    links = list(topo.links if links is None else links)
    if not links:
        return []
    viol, tx = violation_matrix(topo, links, config.delta)
    hidden = tx > config.cs_range
    out = []
    ii, jj = np.nonzero(viol & hidden)
    for i, j in zip(ii, jj):
        if i != j:
            out.append(HiddenNodePair(links[i], links[j], HNCause.INSUFFICIENT_CSRANGE))
    if not config.rs_mode:
        t, r = _endpoints(topo, links)
        captured = _dist(t, r) <= config.cs_range  # [a, v]: victim rx hears aggressor
        ii, jj = np.nonzero(captured & hidden)
        for i, j in zip(ii, jj):
            if i != j:
                out.append(HiddenNodePair(links[i], links[j], HNCause.NO_RESTART_CAPTURE))
    return out


def min_hfd_csrange(topo: Topology, config: RadioConfig,
                    links: Optional[Sequence[DirectedLink]] = None,
                    grid: Optional[float] = None) -> float:
    """Smallest CSRange at which no hidden-node pair remains (RS mode on).

    Hidden-node membership only changes at inter-transmitter distances of
    conflicting pairs, so the answer is the largest such distance. With
    `grid`, the value is rounded up to the next multiple of `grid`.
    """
    if not config.rs_mode:
        raise ValueError("min_hfd_csrange requires rs_mode=True")
    links = list(topo.links if links is None else links)
    if len(links) < 2:
        return 0.0
    viol, tx = violation_matrix(topo, links, config.delta)
    np.fill_diagonal(viol, False)
    cs = float(tx[viol].max()) if viol.any() else 0.0
    if grid:
        k = math.ceil(cs / grid - 1e-9)
        cs = k * grid
    return cs


def ring_links(topo: Topology, ring: int) -> list[DirectedLink]:
    hops = topo.ring_index
    return [l for l in topo.route_links() if hops.get(l.tx) == ring]


def _max_clique(adj: list[set[int]]) -> list[int]:
    best: list[int] = []

    def grow(clique, cands):
        nonlocal best
        if len(clique) + len(cands) <= len(best):
            return
        if not cands:
            best = list(clique)
            return
        for v in sorted(cands):
            if len(clique) + len(cands) <= len(best):
                return
            grow(clique + [v], cands & adj[v])
            cands = cands - {v}

    grow([], set(range(len(adj))))
    return best


def max_concurrent_set(topo: Topology, config: RadioConfig,
                       links: Sequence[DirectedLink],
                       hfd_constraint: bool = True) -> list[DirectedLink]:
    """Largest subset of `links` that can be active together (exhaustive)."""
    links = list(links)
    if not links:
        return []
    g = compatibility_graph(topo, config, links)
    ok = g.compatible & ~g.senses if hfd_constraint else g.compatible
    adj = [set(np.nonzero(ok[i])[0].tolist()) for i in range(len(links))]
    return [links[i] for i in _max_clique(adj)]


def max_concurrent_ring(topo: Topology, config: RadioConfig, ring: int = 2,
                        hfd_constraint: bool = True) -> int:
    """Maximum number of `ring`-hop transmitters that can send simultaneously.

    Candidates must be pairwise compatible; with `hfd_constraint` they must
    also be mutually out of carrier-sensing range, otherwise CSMA would
    serialize them.
    """
    if ring < 1:
        raise ValueError("ring must be >= 1")
    return len(max_concurrent_set(topo, config, ring_links(topo, ring), hfd_constraint))


def lemma2_feasible(theta: float, rho: float, delta: float = 0.78) -> bool:
    """Whether four 2-hop nodes with minimum angular gap `theta` and
    d1 = rho*d0 admit a CSRange meeting the sensing upper bound, the
    1-hop/2-hop sensing lower bound (taken at beta = 2 theta) and the
    receiver spacing constraint."""
    if not (0 < theta <= math.pi) or rho <= 0:
        raise ValueError("need 0 < theta <= pi and rho > 0")
    c = math.cos(theta)
    if not rho < math.sqrt(2 * (1 - c)) / (1 + delta):
        return False
    # CSRange window non-empty  <=>  u^2 (1 - 2c) + 2u cos(2 theta) - 1 > 0, u = 1 + rho.
    # Solving for rho gives the two branches; which side is feasible depends
    # on the sign of (1 - 2c).
    a = 1 - 2 * c
    c2 = math.cos(2 * theta)
    if abs(a) < 1e-12:
        return 2 * (1 + rho) * c2 - 1 > 0
    disc = c2 * c2 + a
    if disc < 0:
        return a > 0
    root = math.sqrt(disc)
    hi = (-c2 + root) / a - 1
    lo = (-c2 - root) / a - 1
    if a > 0:
        return rho > hi or rho < lo
    return lo < rho < hi


def circle_max_min_distance(radius: float = 1.0, step_deg: float = 1.0) -> float:
    """Exhaustive grid search over three points on a circle: the largest
    achievable minimum pairwise distance. One point is pinned at angle 0
    (rotation invariance)."""
    ang = np.deg2rad(np.arange(0.0, 360.0, step_deg))
    a1, a2 = np.meshgrid(ang, ang, indexing="ij")

    def chord(x, y):
        return 2 * radius * np.abs(np.sin((x - y) / 2))

    m = np.minimum(np.minimum(chord(0.0, a1), chord(0.0, a2)), chord(a1, a2))
    return float(m.max())


def aggregate_sir(topo: Topology, config: RadioConfig, victim: DirectedLink,
                  active: Iterable[int]) -> float:
    """Signal power at victim.rx over the summed power of every other active transmitter."""
    active = set(active)
    if victim.tx not in active:
        raise ValueError("victim transmitter must be active")
    if victim.rx in active:
        raise ValueError("victim receiver cannot transmit while receiving")
    pos = topo.positions
    rx = pos[victim.rx]
    a = config.path_loss_exp
    signal = received_power(config.tx_power, pos[victim.tx].dist(rx), a)
    interference = sum(received_power(config.tx_power, pos[n].dist(rx), a)
                       for n in active if n != victim.tx)
    if interference == 0:
        return math.inf
    return signal / interference
