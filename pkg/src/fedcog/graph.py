"""Global graph container and centralized propagation routines.

The centralized routines here are the reference side of every federated
equivalence check, so they deliberately share the summation layout used by
the per-party propagation: scale sources, sum neighbours in ascending id
order (self-loop included), scale the target.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

ACTIVATIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "relu": lambda x: np.maximum(x, 0.0),
    "linear": lambda x: x,
    "tanh": np.tanh,
}


def canonical_edges(edges) -> np.ndarray:
    """Return an (E, 2) int array of sorted, de-duplicated, loop-free pairs."""
    arr = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(arr) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    arr = np.sort(arr, axis=1)
    arr = arr[arr[:, 0] != arr[:, 1]]
    if len(arr) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return np.unique(arr, axis=0)


@dataclass(frozen=True)
class GlobalGraph:
    """Undirected attributed graph; self-loops are implicit, never stored."""

    num_nodes: int
    edges: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    _adj: sp.csr_matrix | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if len(edges):
            if edges.min() < 0 or edges.max() >= self.num_nodes:
                raise ValueError("edge endpoint out of range")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise ValueError("self-loops must not be stored")
            canon = canonical_edges(edges)
            if len(canon) != len(edges):
                raise ValueError("duplicate edges")
            edges = canon
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim == 1:
            features = features[:, None]
        if features.shape[0] != self.num_nodes:
            raise ValueError(
                f"features have {features.shape[0]} rows, expected {self.num_nodes}"
            )
        if not np.all(np.isfinite(features)):
            raise ValueError("non-finite feature entries")
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if labels.shape[0] != self.num_nodes:
            raise ValueError("labels must have one entry per node")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_edges(cls, num_nodes, edges, features=None, labels=None, num_classes=None):
        """Build a graph, canonicalising the edge list first."""
        if features is None:
            features = np.ones((num_nodes, 1))
        if labels is None:
            labels = np.zeros(num_nodes, dtype=np.int64)
        labels = np.asarray(labels, dtype=np.int64)
        if num_classes is None:
            num_classes = int(labels.max()) + 1 if len(labels) else 0
        return cls(num_nodes, canonical_edges(edges), features, labels, num_classes)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def adjacency(self) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency in CSR with sorted column indices (no self-loops)."""
        if self._adj is None:
            n = self.num_nodes
            e = self.edges
            rows = np.concatenate([e[:, 0], e[:, 1]])
            cols = np.concatenate([e[:, 1], e[:, 0]])
            adj = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
            adj.sum_duplicates()
            adj.sort_indices()
            object.__setattr__(self, "_adj", adj)
        return self._adj

    def neighbors(self, u: int) -> np.ndarray:
        adj = self.adjacency()
        return adj.indices[adj.indptr[u] : adj.indptr[u + 1]]

    def with_features(self, features: np.ndarray) -> "GlobalGraph":
        return GlobalGraph(self.num_nodes, self.edges, features, self.labels, self.num_classes)

    def with_edges(self, edges) -> "GlobalGraph":
        return GlobalGraph(
            self.num_nodes, canonical_edges(edges), self.features, self.labels, self.num_classes
        )


def sla_degrees(g: GlobalGraph) -> np.ndarray:
    """Degrees in the self-loop-augmented graph, 1 + d_u."""
    deg = np.ones(g.num_nodes, dtype=np.int64)
    if g.num_edges:
        np.add.at(deg, g.edges[:, 0], 1)
        np.add.at(deg, g.edges[:, 1], 1)
    return deg


def sla_operator(adj: sp.csr_matrix) -> sp.csr_matrix:
    """Adjacency plus identity, CSR with ascending column order per row."""
    n = adj.shape[0]
    op = (adj + sp.identity(n, format="csr")).tocsr()
    op.sum_duplicates()
    op.sort_indices()
    return op


def _as_matrix(h, n: int) -> tuple[np.ndarray, bool]:
    h = np.asarray(h, dtype=np.float64)
    squeeze = h.ndim == 1
    if squeeze:
        h = h[:, None]
    if h.shape[0] != n:
        raise ValueError(f"embedding has {h.shape[0]} rows, graph has {n} nodes")
    return h, squeeze


def _propagate(op: sp.csr_matrix, deg: np.ndarray, h: np.ndarray, r: float) -> np.ndarray:
    src = deg ** (-r)
    dst = deg ** (r - 1.0)
    return dst[:, None] * (op @ (src[:, None] * h))


def propagate_once(g: GlobalGraph, h, r: float = 0.5) -> np.ndarray:
    """One step of ``D^{r-1} (A + I) D^{-r} h`` with D the SLA degrees."""
    h, squeeze = _as_matrix(h, g.num_nodes)
    deg = sla_degrees(g).astype(np.float64)
    out = _propagate(sla_operator(g.adjacency()), deg, h, r)
    return out[:, 0] if squeeze else out


def centralized_sgc(g: GlobalGraph, layers: int, r: float = 0.5, h=None) -> np.ndarray:
    """Apply :func:`propagate_once` ``layers`` times, starting from ``h`` or the features."""
    if layers < 0:
        raise ValueError("layers must be >= 0")
    h, squeeze = _as_matrix(g.features if h is None else h, g.num_nodes)
    op = sla_operator(g.adjacency())
    deg = sla_degrees(g).astype(np.float64)
    out = h.copy()
    for _ in range(layers):
        out = _propagate(op, deg, out, r)
    return out[:, 0] if squeeze else out


def centralized_appnp(g: GlobalGraph, layers: int, alpha: float, h=None) -> np.ndarray:
    """Personalized-PageRank power iteration ``(1-a) S H + a H0``."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    h0, squeeze = _as_matrix(g.features if h is None else h, g.num_nodes)
    op = sla_operator(g.adjacency())
    deg = sla_degrees(g).astype(np.float64)
    out = h0.copy()
    for _ in range(layers):
        out = (1.0 - alpha) * _propagate(op, deg, out, 0.5) + alpha * h0
    return out[:, 0] if squeeze else out


def centralized_gcn_forward(
    g: GlobalGraph,
    weights: Sequence[np.ndarray],
    activation: str = "relu",
    h=None,
) -> np.ndarray:
    """Multi-layer GCN forward pass, ``H <- act(S H W)`` per weight matrix."""
    act = ACTIVATIONS[activation]
    out, _ = _as_matrix(g.features if h is None else h, g.num_nodes)
    op = sla_operator(g.adjacency())
    deg = sla_degrees(g).astype(np.float64)
    src = deg ** -0.5
    for w in weights:
        w = np.asarray(w, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != out.shape[1]:
            raise ValueError(f"weight of shape {w.shape} does not accept dim {out.shape[1]}")
        out = act(src[:, None] * ((op @ (src[:, None] * out)) @ w))
    return out


def edge_density(g: GlobalGraph) -> float:
    return density_from_counts(g.num_nodes, g.num_edges)


def density_from_counts(num_nodes: int, num_edges: int) -> float:
    if num_nodes < 2:
        raise ValueError("edge density needs at least two nodes")
    return 2.0 * num_edges / (num_nodes * (num_nodes - 1))


def sbm_generate(
    block_sizes: Sequence[int],
    p_in: float,
    p_out: float,
    feature_dim: int,
    num_classes: int | None = None,
    seed: int = 0,
    feature_scale: float = 1.0,
) -> GlobalGraph:
    """Stochastic block model with class-correlated Gaussian features.

    Node labels are block ids (modulo ``num_classes``); features are a class
    mean drawn from N(0, feature_scale^2) plus unit Gaussian noise.
    """
    if not block_sizes or any(b <= 0 for b in block_sizes):
        raise ValueError("block sizes must be positive")
    if not (0.0 <= p_in <= 1.0 and 0.0 <= p_out <= 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    if num_classes is None:
        num_classes = len(block_sizes)
    rng = np.random.default_rng(seed)
    block = np.repeat(np.arange(len(block_sizes)), block_sizes)
    n = len(block)
    iu, iv = np.triu_indices(n, k=1)
    prob = np.where(block[iu] == block[iv], p_in, p_out)
    keep = rng.random(len(iu)) < prob
    edges = np.stack([iu[keep], iv[keep]], axis=1)
    labels = block % num_classes
    means = rng.normal(scale=feature_scale, size=(num_classes, feature_dim))
    features = means[labels] + rng.normal(size=(n, feature_dim))
    return GlobalGraph(n, edges, features, labels, num_classes)
