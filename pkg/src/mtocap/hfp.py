"""Hidden-node-free path selection.

scheme 1: every link active, CSRange fixed at 3.78 x tx_range.
scheme 2: every link active, CSRange = smallest hidden-node-free value.
scheme 3: pick one path per source (branch and bound over near-shortest
candidates) so that only the links actually used must be hidden-node free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import networkx as nx
import numpy as np

from .conflict import min_hfd_csrange, violation_matrix
from .geometry import RadioConfig, make_link
from .topology import Topology

SCHEME1_FACTOR = 3.78
CAPACITY_CAP = Fraction(3, 4)


@dataclass
class PathSelection:
    scheme: str
    active_links: frozenset
    cs_range: float
    paths: dict[int, list[int]]
    objective: Optional[Fraction] = None
    exhausted: bool = False
    expansions: int = 0

    @property
    def routes(self) -> dict[int, int]:
        out = {}
        for p in self.paths.values():
            for a, b in zip(p[:-1], p[1:]):
                out[a] = b
        return out

    def topology(self, topo: Topology) -> Topology:
        """The network with every node off the selected paths switched off."""
        keep = set().union(*self.paths.values()) if self.paths else {topo.sink}
        links = [make_link(t, r, topo.positions) for t, r in sorted(self.active_links)
                 if t in keep and r in keep]
        return topo.restrict(keep, links, self.routes)

    def config(self, base: RadioConfig) -> RadioConfig:
        return base.with_cs(self.cs_range)

    def dumps(self) -> str:
        lines = [f"scheme {self.scheme}", f"csrange {self.cs_range:.6f}"]
        if self.objective is not None:
            lines.append(f"objective {self.objective}")
        lines.append(f"exhausted {str(self.exhausted).lower()}")
        for s in sorted(self.paths):
            lines.append(f"path {s}: " + " ".join(str(n) for n in self.paths[s]))
        return "\n".join(lines) + "\n"


def _all_paths(topo: Topology) -> dict[int, list[int]]:
    return {s: topo.path(s) for s in topo.sources}


def select_scheme1(topo: Topology, config: RadioConfig) -> PathSelection:
    cs = SCHEME1_FACTOR * config.tx_range
    return PathSelection("fixed_378", frozenset(l.key for l in topo.links), cs,
                         _all_paths(topo))


def select_scheme2(topo: Topology, config: RadioConfig) -> PathSelection:
    cs = max(min_hfd_csrange(topo, config), config.tx_range)
    return PathSelection("min_hfd_all_links", frozenset(l.key for l in topo.links), cs,
                         _all_paths(topo))


def candidate_paths(topo: Topology, source: int, stretch: float = 1.5,
                    limit: int = 8) -> list[list[int]]:
    """Up to `limit` simple paths to the sink, shortest first, at most
    `stretch` times the minimum hop count."""
    g = nx.DiGraph()
    g.add_nodes_from(topo.nodes)
    g.add_edges_from(sorted(l.key for l in topo.links))
    out = []
    try:
        gen = nx.shortest_simple_paths(g, source, topo.sink)
        for p in gen:
            if not out:
                cap = math.floor(stretch * (len(p) - 1) + 1e-9)
            if len(p) - 1 > cap or len(out) >= limit:
                break
            out.append(p)
    except nx.NetworkXNoPath:
        pass
    return out


@dataclass
class _Best:
    value: Fraction = Fraction(-1)
    cs: float = math.inf
    hops: int = 0
    lex: tuple = ()
    choice: Optional[dict] = None


def max_weight_clique(weights: list[int], adj: list[int]) -> int:
    """Exact maximum clique weight; `adj[v]` is a bitmask of v's neighbours."""
    best = 0

    def grow(cand: int, cur: int, rest: int):
        nonlocal best
        if cur + rest <= best:
            return
        if not cand:
            best = cur
            return
        v = (cand & -cand).bit_length() - 1
        wv = weights[v]
        inc = cand & adj[v]
        grow(inc, cur + wv, sum(weights[u] for u in _bits(inc)))
        grow(cand & ~(1 << v), cur, rest - wv)

    full = (1 << len(weights)) - 1
    grow(full, 0, sum(weights))
    return best


def _bits(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def select_scheme3(topo: Topology, config: RadioConfig, budget: int = 20_000,
                   stretch: float = 1.5, max_candidates: int = 8) -> PathSelection:
    """Branch and bound over per-source candidate paths.

    A complete selection is scored by a clique bound on its uniform-rate
    throughput: links conflict when they share a node, break the
    interference inequalities, or have transmitters within the selection's
    own minimal hidden-node-free CSRange. With load(l) the number of flows
    on link l and W the heaviest clique, every source gets at most 1/W, so
    the estimate is min(n_sources / W, 3/4). Ties go to the smaller
    CSRange, then to fewer transmissions per delivered packet (total hops),
    then to the lexicographically smaller link set. Adding paths can only
    raise W, the CSRange and the hop total, so a partial selection's own
    score is an optimistic bound for its completions.
    """
    sources = topo.sources
    cands = {}
    for s in sources:
        c = candidate_paths(topo, s, stretch, max_candidates)
        if not c:
            raise ValueError(f"source {s} cannot reach the sink")
        cands[s] = c
    keys = sorted({(a, b) for ps in cands.values() for p in ps for a, b in zip(p[:-1], p[1:])})
    kidx = {k: i for i, k in enumerate(keys)}
    links = [make_link(a, b, topo.positions) for a, b in keys]
    viol, txd = violation_matrix(topo, links, config.delta)
    np.fill_diagonal(viol, False)
    share = np.array([[bool({a.tx, a.rx} & {b.tx, b.rx}) for b in links] for a in links],
                     dtype=bool).reshape(len(links), len(links))
    hard = viol | share
    conflict_d = np.where(viol, txd, 0.0)
    floor_cs = config.tx_range
    n_src = len(sources)

    order = sorted(sources, key=lambda s: (len(cands[s]), s))
    path_links = {s: [[kidx[e] for e in zip(p[:-1], p[1:])] for p in cands[s]] for s in sources}

    def cs_of(active):
        if len(active) < 2:
            return floor_cs
        a = np.fromiter(active, dtype=int)
        return max(float(conflict_d[np.ix_(a, a)].max()), floor_cs)

    def score(load, cs):
        if not load:
            return CAPACITY_CAP
        ids = sorted(load)
        a = np.array(ids)
        conf = hard[np.ix_(a, a)] | (txd[np.ix_(a, a)] <= cs)
        np.fill_diagonal(conf, False)
        adj = [sum(1 << j for j in np.nonzero(row)[0].tolist()) for row in conf]
        w = max_weight_clique([load[i] for i in ids], adj)
        return min(Fraction(n_src, w), CAPACITY_CAP)

    best = _Best()
    state = {"n": 0, "exhausted": False}

    def dfs(pos, nxt, hop, load, choice):
        if state["n"] >= budget:
            state["exhausted"] = True
            return
        state["n"] += 1
        cs = cs_of(load.keys())
        v = score(load, cs)
        hops = sum(load.values())
        rank = _rank(v, cs, hops, best)
        if pos == len(order):
            lex = tuple(sorted(keys[i] for i in load))
            if rank < 0 or (rank == 0 and lex < best.lex):
                best.value, best.cs, best.hops, best.lex = v, cs, hops, lex
                best.choice = dict(choice)
            return
        if rank > 0:
            return
        s = order[pos]
        for ci, p in enumerate(cands[s]):
            n_hops = len(p) - 1
            good = True
            add_nxt, add_hop = {}, {}
            for depth, (a, b) in enumerate(zip(p[:-1], p[1:])):
                h = n_hops - depth
                if nxt.get(a, b) != b or hop.get(a, h) != h:
                    good = False
                    break
                add_nxt[a], add_hop[a] = b, h
            if not good:
                continue
            new_load = dict(load)
            for li in path_links[s][ci]:
                new_load[li] = new_load.get(li, 0) + 1
            choice[s] = ci
            dfs(pos + 1, {**nxt, **add_nxt}, {**hop, **add_hop}, new_load, choice)
            del choice[s]

    dfs(0, {}, {}, {}, {})
    if best.choice is None:
        raise ValueError("no consistent path selection found within the budget")
    paths = {s: cands[s][best.choice[s]] for s in sources}
    return PathSelection("hfp_subset", frozenset(best.lex), best.cs, paths, best.value,
                         state["exhausted"], state["n"])


def _rank(v, cs, hops, best) -> int:
    """-1 if (v, cs, hops) beats the incumbent, 1 if worse, 0 on a tie."""
    if v != best.value:
        return -1 if v > best.value else 1
    if abs(cs - best.cs) > 1e-9:
        return -1 if cs < best.cs else 1
    if hops != best.hops:
        return -1 if hops < best.hops else 1
    return 0


def select(topo: Topology, config: RadioConfig, scheme: int, **kw) -> PathSelection:
    if scheme == 1:
        return select_scheme1(topo, config)
    if scheme == 2:
        return select_scheme2(topo, config)
    if scheme == 3:
        return select_scheme3(topo, config, **kw)
    raise ValueError("scheme must be 1, 2 or 3")
