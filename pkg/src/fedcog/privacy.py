"""Exposure audit, Local Nearest Neighbour Connection, and attack counting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .decouple import LocalGraph
from .graph import GlobalGraph


@dataclass(frozen=True)
class ExposureReport:
    party: int
    exposed_nodes: frozenset
    adversary_set: frozenset


@dataclass(frozen=True)
class LnncPlan:
    party: int
    added_edges: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    exposed_before: int = 0


def find_exposed_nodes(lg: LocalGraph, adversaries: Iterable[int]) -> ExposureReport:
    """Internal nodes whose every neighbour is held by a colluding adversary.

    Nodes with no neighbours at all are not reported: nothing derived from
    their features ever leaves the party.
    """
    adversaries = frozenset(int(a) for a in adversaries)
    if lg.party in adversaries:
        raise ValueError("a party cannot be its own adversary")
    intra = lg.intra_neighbors()
    inter = lg.inter_neighbors()
    exposed = set()
    for u in lg.internal_nodes.tolist():
        if intra[u] or not inter[u]:
            continue
        if all(lg.external_nodes[v] in adversaries for v in inter[u]):
            exposed.add(u)
    return ExposureReport(lg.party, frozenset(exposed), adversaries)


def angular_distance(x, y) -> float:
    """``arccos(cos_sim) / pi``; a zero vector is at distance 1 (0 if both are zero)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0.0 and ny == 0.0:
        return 0.0
    if nx == 0.0 or ny == 0.0:
        return 1.0
    cos = float(np.clip(x @ y / (nx * ny), -1.0, 1.0))
    return math.acos(cos) / math.pi


def _angular_row(x: np.ndarray, others: np.ndarray) -> np.ndarray:
    nx = np.linalg.norm(x)
    no = np.linalg.norm(others, axis=1)
    if nx == 0.0:
        return np.where(no == 0.0, 0.0, 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.clip(others @ x / (no * nx), -1.0, 1.0)
    d = np.arccos(cos) / np.pi
    return np.where(no == 0.0, 1.0, d)


def lnnc_augment(lg: LocalGraph) -> tuple[LocalGraph, LnncPlan]:
    """Connect every internally isolated border node to its angular nearest local node.

    Exposure is judged against the worst case, every other party colluding.
    Nodes are handled in ascending id; distance ties go to the lowest id.
    """
    others = set(lg.external_nodes.values())
    exposed = sorted(find_exposed_nodes(lg, others).exposed_nodes)
    existing = {(min(u, v), max(u, v)) for u, v in lg.intra_edges}
    added: list[tuple[int, int]] = []
    skipped: list[int] = []
    ids = lg.internal_nodes
    for u in exposed:
        if len(ids) < 2:
            skipped.append(u)
            continue
        row = lg.row_of(u)
        d = _angular_row(lg.features[row], lg.features)
        d[row] = np.inf
        w = int(ids[int(np.argmin(d))])
        edge = (min(u, w), max(u, w))
        if edge not in existing:
            existing.add(edge)
            added.append(edge)
    plan = LnncPlan(lg.party, added, skipped, len(exposed))
    if not added:
        return lg, plan
    return replace(lg, intra_edges=sorted(existing), _row=None), plan


def augmented_graph(g: GlobalGraph, plans: Sequence[LnncPlan]) -> GlobalGraph:
    """The global graph with every party's LNNC edges added."""
    extra = [e for p in plans for e in p.added_edges]
    if not extra:
        return g
    return g.with_edges(np.concatenate([g.edges, np.asarray(extra, dtype=np.int64)]))


def attack_count(
    victim_border_node_neighbors: int,
    inner_internal_neighbor_counts: Sequence[int] = (),
    layers: int = 1,
    feature_dim: int = 1,
) -> tuple[int, int]:
    """Equations available to a colluding adversary vs unknowns it must solve for.

    One layer leaks ``F`` equations in ``k (F + 1)`` unknowns, ``k`` being the
    victim's internal neighbours of the observed border node. Two layers leak
    ``2F`` equations in ``k (F + 2) + sum_v c_v (F + 1)`` unknowns, ``c_v`` being
    the number of the victim's own nodes adjacent to neighbour ``v``.
    """
    if layers not in (1, 2):
        raise ValueError("attack counting is defined for 1 or 2 layers only")
    k = int(victim_border_node_neighbors)
    f = int(feature_dim)
    if k < 0 or f < 0 or any(c < 0 for c in inner_internal_neighbor_counts):
        raise ValueError("counts must be non-negative")
    if layers == 1:
        return f, k * (f + 1)
    if len(inner_internal_neighbor_counts) != k:
        raise ValueError("need one inner neighbour count per internal neighbour")
    return 2 * f, k * (f + 2) + sum(int(c) for c in inner_internal_neighbor_counts) * (f + 1)


def attack_surface(lg: LocalGraph) -> list[tuple[int, list[int]]]:
    """For each foreign node adjacent to ``lg``, the victim-side counts fed to :func:`attack_count`.

    Returns ``(external node, [intra-degree of each internal neighbour])``.
    """
    intra = lg.intra_neighbors()
    by_ext: dict[int, list[int]] = {}
    for u, v in lg.inter_edges:
        by_ext.setdefault(v, []).append(len(intra[u]))
    return sorted(by_ext.items())
