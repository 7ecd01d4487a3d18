"""Per-party local graphs and their internal/border decoupling."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .graph import sla_operator


@dataclass(frozen=True)
class LocalGraph:
    """What one party can see: its own nodes and every edge touching them.

    ``external_nodes`` maps each foreign neighbour to the party that owns it.
    Features and labels are rows aligned with ``internal_nodes`` (ascending ids).
    """

    party: int
    internal_nodes: np.ndarray
    external_nodes: dict[int, int]
    intra_edges: list[tuple[int, int]]
    inter_edges: list[tuple[int, int]]
    features: np.ndarray
    labels: np.ndarray
    _row: dict[int, int] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        nodes = np.asarray(self.internal_nodes, dtype=np.int64)
        object.__setattr__(self, "internal_nodes", nodes)
        object.__setattr__(self, "_row", {int(u): i for i, u in enumerate(nodes)})
        overlap = set(self._row).intersection(self.external_nodes)
        if overlap:
            raise ValueError(f"nodes {sorted(overlap)[:5]} are both internal and external")

    def row_of(self, u: int) -> int:
        return self._row[u]

    def owns(self, u: int) -> bool:
        return u in self._row

    def intra_neighbors(self) -> dict[int, set[int]]:
        out: dict[int, set[int]] = {int(u): set() for u in self.internal_nodes}
        for u, v in self.intra_edges:
            out[u].add(v)
            out[v].add(u)
        return out

    def inter_neighbors(self) -> dict[int, set[int]]:
        out: dict[int, set[int]] = {int(u): set() for u in self.internal_nodes}
        for u, v in self.inter_edges:
            out[u].add(v)
        return out

    def without_inter_edges(self) -> "LocalGraph":
        """The disconnected view: inter-edges and external nodes dropped."""
        return replace(self, external_nodes={}, inter_edges=[], _row=None)


@dataclass(frozen=True)
class InternalGraph:
    """Local graph completed with one zero-feature placeholder per foreign neighbour.

    Rows ``0..num_internal-1`` are internal nodes in ascending id order; the
    remaining rows are placeholders ``(v, party)`` in ascending ``v`` order.
    """

    party: int
    nodes: list
    num_internal: int
    operator: sp.csr_matrix
    sla_degree: np.ndarray
    placeholder_owner: dict[tuple[int, int], int]

    @property
    def placeholders(self) -> list[tuple[int, int]]:
        return self.nodes[self.num_internal :]

    @property
    def num_placeholders(self) -> int:
        return len(self.nodes) - self.num_internal

    @property
    def num_edges(self) -> int:
        return int(self.operator.nnz - len(self.nodes)) // 2


@dataclass(frozen=True)
class BorderGraph:
    """Bipartite graph of border nodes and one slot per foreign owner party.

    ``slots[u]`` lists, in ascending order, the parties owning a neighbour of
    internal node ``u``; nodes without inter-edges have no entry.
    """

    party: int
    slots: dict[int, list[int]]

    def edges(self) -> list[tuple[int, tuple[int, int]]]:
        return [(u, (u, j)) for u in sorted(self.slots) for j in self.slots[u]]

    @property
    def num_edges(self) -> int:
        return sum(len(v) for v in self.slots.values())


def graph_decoupling(lg: LocalGraph) -> tuple[InternalGraph, BorderGraph]:
    """Split a local graph into its internal graph and border graph."""
    for u, v in lg.inter_edges:
        if v not in lg.external_nodes:
            raise ValueError(f"inter-edge ({u}, {v}) references unknown external node {v}")
        if not lg.owns(u):
            raise ValueError(f"inter-edge ({u}, {v}) has no internal endpoint")

    n_int = len(lg.internal_nodes)
    ext_ids = sorted({v for _, v in lg.inter_edges})
    placeholders = [(v, lg.party) for v in ext_ids]
    nodes: list = [int(u) for u in lg.internal_nodes] + placeholders
    index = {u: i for i, u in enumerate(lg.internal_nodes.tolist())}
    for k, v in enumerate(ext_ids):
        index[("ph", v)] = n_int + k

    pairs = set()
    for u, v in lg.intra_edges:
        a, b = index[u], index[v]
        pairs.add((min(a, b), max(a, b)))
    for u, v in lg.inter_edges:
        pairs.add((index[u], index[("ph", v)]))
    size = len(nodes)
    if pairs:
        arr = np.array(sorted(pairs), dtype=np.int64)
        rows = np.concatenate([arr[:, 0], arr[:, 1]])
        cols = np.concatenate([arr[:, 1], arr[:, 0]])
        adj = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(size, size))
    else:
        adj = sp.csr_matrix((size, size))
    op = sla_operator(adj)
    deg = np.asarray(op.sum(axis=1)).reshape(-1).astype(np.int64)

    owner = {ph: lg.external_nodes[ph[0]] for ph in placeholders}
    ig = InternalGraph(lg.party, nodes, n_int, op, deg, owner)

    slots: dict[int, set[int]] = {}
    for u, v in lg.inter_edges:
        slots.setdefault(u, set()).add(lg.external_nodes[v])
    bg = BorderGraph(lg.party, {u: sorted(js) for u, js in sorted(slots.items())})
    return ig, bg
