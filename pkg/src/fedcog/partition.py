"""Splitting a global graph across parties and measuring the split."""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass

import numpy as np

from .decouple import LocalGraph
from .graph import GlobalGraph


@dataclass(frozen=True)
class Partition:
    owner: np.ndarray
    num_parties: int

    def __post_init__(self):
        owner = np.asarray(self.owner, dtype=np.int64)
        object.__setattr__(self, "owner", owner)
        if len(owner) and (owner.min() < 0 or owner.max() >= self.num_parties):
            raise ValueError("owner ids must lie in 0..num_parties-1")
        sizes = np.bincount(owner, minlength=self.num_parties)
        if np.any(sizes == 0):
            raise ValueError(f"parties {np.flatnonzero(sizes == 0).tolist()} own no nodes")

    def sizes(self) -> list[int]:
        return np.bincount(self.owner, minlength=self.num_parties).tolist()

    def members(self, party: int) -> np.ndarray:
        return np.flatnonzero(self.owner == party)


@dataclass(frozen=True)
class PartitionStats:
    intra_edge_fraction: float
    avg_label_emd: float
    party_sizes: list[int]


def _check_parts(g: GlobalGraph, m: int) -> None:
    if m < 1:
        raise ValueError("need at least one party")
    if m > g.num_nodes:
        raise ValueError(f"cannot split {g.num_nodes} nodes into {m} parties")


def _sq_dist(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = (x * x).sum(1)[:, None] - 2.0 * x @ c.T + (c * c).sum(1)[None, :]
    return np.maximum(d, 0.0)


def kmeans_partition(g: GlobalGraph, m: int, max_iters: int = 100, seed: int = 0) -> Partition:
    """Lloyd's algorithm on feature rows with k-means++ seeding.

    Empty clusters are refilled with the point farthest from its own centroid.
    """
    _check_parts(g, m)
    x = g.features
    n = len(x)
    rng = np.random.default_rng(seed)

    centers = [x[rng.integers(n)]]
    closest = _sq_dist(x, np.asarray(centers))[:, 0]
    for _ in range(1, m):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            idx = int(rng.integers(n))
        centers.append(x[idx])
        closest = np.minimum(closest, _sq_dist(x, x[idx : idx + 1])[:, 0])
    centers = np.asarray(centers, dtype=np.float64)

    owner = None
    for _ in range(max(1, max_iters)):
        d = _sq_dist(x, centers)
        new = d.argmin(axis=1)
        new = _repair_empty(new, d, m)
        if owner is not None and np.array_equal(new, owner):
            break
        owner = new
        for k in range(m):
            centers[k] = x[owner == k].mean(axis=0)
    return Partition(owner, m)


def _repair_empty(owner: np.ndarray, d: np.ndarray, m: int) -> np.ndarray:
    owner = owner.copy()
    for k in range(m):
        if np.any(owner == k):
            continue
        counts = np.bincount(owner, minlength=m)
        own_d = d[np.arange(len(owner)), owner].copy()
        own_d[counts[owner] <= 1] = -np.inf
        owner[int(np.argmax(own_d))] = k
    return owner


def _bfs(g: GlobalGraph, src: int) -> np.ndarray:
    dist = np.full(g.num_nodes, -1, dtype=np.int64)
    dist[src] = 0
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for v in g.neighbors(u):
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def _far_seeds(g: GlobalGraph, m: int, rng: np.random.Generator) -> list[int]:
    n = g.num_nodes
    unreachable = n + 1

    def dists(src):
        d = _bfs(g, src)
        d[d < 0] = unreachable
        return d

    start = int(rng.integers(n))
    seeds = [int(np.argmax(dists(start)))]
    nearest = dists(seeds[0])
    nearest[seeds[0]] = -1
    while len(seeds) < m:
        s = int(np.argmax(nearest))
        seeds.append(s)
        nearest = np.minimum(nearest, dists(s))
        nearest[seeds] = -1
    return seeds


def topological_partition(g: GlobalGraph, m: int, seed: int = 0) -> Partition:
    """Balanced BFS region growing from mutually distant seeds.

    The smallest region (lowest party id on ties) always grows next, taking
    the frontier node with the most neighbours already inside it (lowest id on
    ties). A region with an empty frontier jumps to the lowest unassigned id,
    so region sizes never differ by more than one.
    """
    _check_parts(g, m)
    rng = np.random.default_rng(seed)
    n = g.num_nodes
    owner = np.full(n, -1, dtype=np.int64)
    sizes = [0] * m
    heaps: list[list[tuple[int, int]]] = [[] for _ in range(m)]
    inside = [dict() for _ in range(m)]
    next_free = 0

    def claim(u: int, k: int) -> None:
        owner[u] = k
        sizes[k] += 1
        for v in g.neighbors(u):
            v = int(v)
            if owner[v] < 0:
                c = inside[k].get(v, 0) + 1
                inside[k][v] = c
                heapq.heappush(heaps[k], (-c, v))

    for k, s in enumerate(_far_seeds(g, m, rng)):
        claim(s, k)
    for _ in range(n - m):
        k = min(range(m), key=lambda j: (sizes[j], j))
        heap = heaps[k]
        chosen = -1
        while heap:
            negc, v = heapq.heappop(heap)
            if owner[v] < 0 and inside[k][v] == -negc:
                chosen = v
                break
        if chosen < 0:
            while owner[next_free] >= 0:
                next_free += 1
            chosen = next_free
        claim(chosen, k)
    return Partition(owner, m)


def induce_local_graphs(g: GlobalGraph, p: Partition) -> list[LocalGraph]:
    """Give each party its nodes, every incident edge, and owner tags for foreign neighbours."""
    if len(p.owner) != g.num_nodes:
        raise ValueError("partition size does not match graph")
    intra: list[list] = [[] for _ in range(p.num_parties)]
    inter: list[list] = [[] for _ in range(p.num_parties)]
    ext: list[dict] = [dict() for _ in range(p.num_parties)]
    for u, v in g.edges.tolist():
        a, b = int(p.owner[u]), int(p.owner[v])
        if a == b:
            intra[a].append((u, v))
        else:
            inter[a].append((u, v))
            inter[b].append((v, u))
            ext[a][v] = b
            ext[b][u] = a
    out = []
    for i in range(p.num_parties):
        nodes = p.members(i)
        out.append(
            LocalGraph(
                party=i,
                internal_nodes=nodes,
                external_nodes=dict(sorted(ext[i].items())),
                intra_edges=sorted(intra[i]),
                inter_edges=sorted(inter[i]),
                features=g.features[nodes].copy(),
                labels=g.labels[nodes].copy(),
            )
        )
    return out


def label_emd(p: Partition, g: GlobalGraph) -> float:
    """Unweighted mean over parties of the L1 gap to the global label distribution."""
    c = max(g.num_classes, int(g.labels.max()) + 1 if g.num_nodes else 0)
    q = np.bincount(g.labels, minlength=c) / g.num_nodes
    total = 0.0
    for i in range(p.num_parties):
        hist = np.bincount(g.labels[p.owner == i], minlength=c)
        total += float(np.abs(hist / hist.sum() - q).sum())
    return total / p.num_parties


def partition_stats(p: Partition, g: GlobalGraph) -> PartitionStats:
    if g.num_edges:
        e = g.edges
        frac = float(np.mean(p.owner[e[:, 0]] == p.owner[e[:, 1]]))
    else:
        frac = 1.0
    return PartitionStats(frac, label_emd(p, g), p.sizes())
