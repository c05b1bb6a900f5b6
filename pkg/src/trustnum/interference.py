"""Conflict graph, independent-set capacity region and max-weight scheduling."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import TooLarge
from .topology import LinkKey, Network

MODELS = ("node-exclusive", "k-hop", "none", "explicit")
ENUMERATION_CAP = 24


@dataclass(frozen=True)
class ConflictGraph:
    """One vertex per network link (by index); ``edges`` holds pairs (i, j) with i < j."""

    n: int
    edges: frozenset
    model: str = "node-exclusive"
    k: int = 0

    def __post_init__(self):
        for i, j in self.edges:
            if not (0 <= i < j < self.n):
                raise ValueError(f"bad conflict edge {(i, j)}")

    @property
    def adjacency(self) -> list[set[int]]:
        adj = [set() for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].add(j)
            adj[j].add(i)
        return adj

    def conflicts(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges

    def is_independent(self, links: Iterable[int]) -> bool:
        links = sorted(links)
        return not any(self.conflicts(a, b) for ai, a in enumerate(links) for b in links[ai + 1:])


def _hop_distances(network: Network, k: int) -> dict[str, dict[str, int]]:
    nbrs = {n: set() for n in network.nodes}
    for link in network.links:
        nbrs[link.src].add(link.dst)
        nbrs[link.dst].add(link.src)
    dist = {}
    for root in network.nodes:
        seen = {root: 0}
        queue = deque([root])
        while queue:
            u = queue.popleft()
            if seen[u] == k:
                continue
            for v in sorted(nbrs[u]):
                if v not in seen:
                    seen[v] = seen[u] + 1
                    queue.append(v)
        dist[root] = seen
    return dist


def build_conflict_graph(
    network: Network,
    model: str = "node-exclusive",
    k: int = 0,
    conflicts: Sequence[tuple[LinkKey, LinkKey]] = (),
) -> ConflictGraph:
    """Build the link conflict graph under one of the supported interference rules.

    ``node-exclusive``: links sharing an endpoint conflict. ``k-hop``: some
    endpoint of one link is within ``k`` undirected hops of an endpoint of the
    other (``k=0`` is node-exclusive). ``none``: no conflicts. ``explicit``:
    exactly the link pairs listed in ``conflicts``.
    """
    n = len(network)
    edges = set()
    if model == "none":
        pass
    elif model == "explicit":
        for a, b in conflicts:
            i, j = network.index(a), network.index(b)
            if i == j:
                raise ValueError(f"link {a} cannot conflict with itself")
            edges.add((min(i, j), max(i, j)))
    elif model in ("node-exclusive", "k-hop"):
        if model == "node-exclusive":
            k = 0
        if k < 0:
            raise ValueError("k must be non-negative")
        dist = _hop_distances(network, k)
        links = network.links
        for i in range(n):
            for j in range(i + 1, n):
                ends_i = (links[i].src, links[i].dst)
                ends_j = (links[j].src, links[j].dst)
                if any(b in dist[a] for a in ends_i for b in ends_j):
                    edges.add((i, j))
    else:
        raise ValueError(f"unknown interference model {model!r}; expected one of {MODELS}")
    return ConflictGraph(n, frozenset(edges), model, k)


def enumerate_independent_sets(cg: ConflictGraph, cap: int = ENUMERATION_CAP) -> list[tuple[int, ...]]:
    """All maximal independent sets in lexicographic order, followed by the empty set.

    Bron-Kerbosch with pivoting, run on the complement of the conflict
    relation (maximal independent sets are maximal cliques there). Sets are
    bitmasks internally.
    """
    if cg.n > cap:
        raise TooLarge(f"{cg.n} links exceeds the enumeration cap of {cap}")
    full = (1 << cg.n) - 1
    compat = [full & ~(1 << i) for i in range(cg.n)]
    for i, j in cg.edges:
        compat[i] &= ~(1 << j)
        compat[j] &= ~(1 << i)

    found = []

    def expand(r, p, x):
        if not p and not x:
            found.append(r)
            return
        # pivot maximising |P ∩ N(u)| keeps the branching small
        pivot = max(_bits(p | x), key=lambda u: (compat[u] & p).bit_count())
        for v in _bits(p & ~compat[pivot]):
            expand(r | (1 << v), p & compat[v], x & compat[v])
            p &= ~(1 << v)
            x |= 1 << v

    if cg.n:
        expand(0, full, 0)
    sets = sorted(tuple(_bits(m)) for m in found)
    sets.append(())
    return sets


def _bits(mask: int) -> list[int]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


@dataclass(frozen=True)
class CapacityRegion:
    """Vertices of the capacity region: one capacity vector per stored independent set.

    Row ``e`` of ``vectors`` equals the link capacity on links of ``sets[e]``
    and zero elsewhere; the region is the convex hull of these rows.
    """

    sets: tuple[tuple[int, ...], ...]
    vectors: np.ndarray

    @classmethod
    def from_sets(cls, sets: Sequence[Sequence[int]], capacities: np.ndarray) -> "CapacityRegion":
        c = np.asarray(capacities, dtype=float)
        V = np.zeros((len(sets), len(c)))
        for e, s in enumerate(sets):
            V[e, list(s)] = c[list(s)]
        return cls(tuple(tuple(s) for s in sets), V)

    @classmethod
    def build(cls, network: Network, cg: ConflictGraph, cap: int = ENUMERATION_CAP) -> "CapacityRegion":
        return cls.from_sets(enumerate_independent_sets(cg, cap), network.capacities)

    def __len__(self):
        return len(self.sets)

    def index_of(self, links: Iterable[int]) -> int:
        return self.sets.index(tuple(sorted(links)))

    def combine(self, beta: Sequence[float]) -> np.ndarray:
        """Point of the region for hull weights ``beta`` (non-negative, summing to one)."""
        b = np.asarray(beta, dtype=float)
        if b.shape != (len(self),) or (b < -1e-12).any() or abs(b.sum() - 1.0) > 1e-9:
            raise ValueError("beta must be a probability vector over the region's vertices")
        return b @ self.vectors


def _support(vector: np.ndarray) -> tuple[int, ...]:
    return tuple(int(i) for i in np.flatnonzero(vector))


def max_weight_schedule_exact(region: CapacityRegion, prices: Sequence[float]) -> np.ndarray:
    """Region vertex maximising the price-weighted capacity; ties go to the earliest vertex."""
    lam = np.asarray(prices, dtype=float)
    if (lam < 0).any():
        raise ValueError("prices must be non-negative")
    return region.vectors[int(np.argmax(region.vectors @ lam))].copy()


def max_weight_schedule_greedy(cg: ConflictGraph, network: Network, prices: Sequence[float]) -> np.ndarray:
    """Centralised replay of the distributed greedy max-weight policy.

    Repeatedly schedules the free link of largest weight price*capacity at
    full capacity and blocks its conflict neighbours. Ties go to the lowest
    link index. The result is always a maximal independent set.
    """
    lam = np.asarray(prices, dtype=float)
    if (lam < 0).any():
        raise ValueError("prices must be non-negative")
    c = network.capacities
    weight = lam * c
    adj = cg.adjacency
    free = set(range(cg.n))
    out = np.zeros(cg.n)
    while free:
        best = min(free, key=lambda i: (-weight[i], i))
        out[best] = c[best]
        free.discard(best)
        free -= adj[best]
    return out
