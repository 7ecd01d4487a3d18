"""Citation-dataset ingestion and partition files."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .graph import GlobalGraph, canonical_edges
from .partition import Partition

log = logging.getLogger(__name__)


class DatasetError(ValueError):
    pass


def load_citation_dataset(content_path, cites_path, strict: bool = True) -> GlobalGraph:
    """Read a CORA-style ``.content`` / ``.cites`` pair.

    Content lines are ``id<TAB>f1 ... fF<TAB>label``; cites lines are
    ``target<TAB>source`` and are read as undirected. Node ids follow file
    order, class ids follow first appearance of each label string.
    Duplicate edges collapse and self-citations are dropped. Citations to
    unknown ids raise unless ``strict`` is false, in which case they are
    skipped with a warning.
    """
    ids: dict[str, int] = {}
    rows: list[list[float]] = []
    labels: list[int] = []
    classes: dict[str, int] = {}
    width = None
    with open(content_path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) < 3:
                raise DatasetError(f"{content_path}:{lineno}: expected id, features, label")
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise DatasetError(
                    f"{content_path}:{lineno}: {len(parts)} fields, previous lines had {width}"
                )
            node = parts[0]
            if node in ids:
                raise DatasetError(f"{content_path}:{lineno}: duplicate node id {node!r}")
            try:
                feats = [float(x) for x in parts[1:-1]]
            except ValueError as exc:
                raise DatasetError(f"{content_path}:{lineno}: {exc}") from None
            ids[node] = len(ids)
            rows.append(feats)
            labels.append(classes.setdefault(parts[-1], len(classes)))

    edges = []
    raw = 0
    dangling = 0
    with open(cites_path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise DatasetError(f"{cites_path}:{lineno}: expected two node ids")
            raw += 1
            a, b = parts
            if a not in ids or b not in ids:
                if strict:
                    missing = a if a not in ids else b
                    raise DatasetError(f"{cites_path}:{lineno}: unknown node id {missing!r}")
                dangling += 1
                continue
            edges.append((ids[a], ids[b]))
    if dangling:
        log.warning("skipped %d citations to unknown nodes", dangling)
    edges = canonical_edges(edges)
    log.info("loaded %d nodes, %d raw citations, %d undirected edges", len(ids), raw, len(edges))
    return GlobalGraph(len(ids), edges, np.asarray(rows), np.asarray(labels), len(classes))


def write_partition(path, p: Partition) -> None:
    with open(path, "w") as fh:
        for u, k in enumerate(p.owner.tolist()):
            fh.write(f"{u}\t{k}\n")


def read_partition(path) -> Partition:
    pairs = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            u, k = (int(x) for x in line.split("\t"))
        except ValueError:
            raise DatasetError(f"{path}:{lineno}: expected node_id<TAB>party_id") from None
        pairs.append((u, k))
    pairs.sort()
    if [u for u, _ in pairs] != list(range(len(pairs))):
        raise DatasetError(f"{path}: node ids must be 0..n-1, each once")
    owner = np.array([k for _, k in pairs], dtype=np.int64)
    return Partition(owner, int(owner.max()) + 1 if len(owner) else 0)
