"""Two-step federated propagation over decoupled party graphs.

Each layer runs an internal half-step on every party's internal graph, a
barrier where placeholder partial sums are shipped to the owners of the
nodes they stand in for, and a border half-step that folds the received
partial sums into each internal node.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .decouple import BorderGraph, InternalGraph
from .graph import ACTIVATIONS


@dataclass(frozen=True)
class SGC:
    r: float = field(default=0.5, init=False)


@dataclass(frozen=True)
class GPR:
    r: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.r <= 1.0:
            raise ValueError("r must lie in [0, 1]")


@dataclass(frozen=True)
class APPNP:
    alpha: float = 0.1
    r: float = field(default=0.5, init=False)

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")


@dataclass(frozen=True)
class GCN:
    weights: tuple
    activation: str = "relu"
    r: float = field(default=0.5, init=False)

    def __post_init__(self):
        object.__setattr__(
            self, "weights", tuple(np.asarray(w, dtype=np.float64) for w in self.weights)
        )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


Variant = Union[SGC, GPR, APPNP, GCN]


def beta_coeff(sla_degree, variant: Variant = SGC()):
    """Source-side weight ``(1 + d_v)^{-(1 - r)}``."""
    return np.asarray(sla_degree, dtype=np.float64) ** (-(1.0 - variant.r))


def gamma_coeff(sla_degree, variant: Variant = SGC()):
    """Target-side weight ``(1 + d_u)^{-r}``."""
    return np.asarray(sla_degree, dtype=np.float64) ** (-variant.r)


@dataclass
class CostMeter:
    mul_adds: int = 0
    floats_sent: int = 0
    exchange_rounds: int = 0
    messages: int = 0

    def as_dict(self) -> dict:
        return {
            "mul_adds": self.mul_adds,
            "floats_sent": self.floats_sent,
            "exchange_rounds": self.exchange_rounds,
            "messages": self.messages,
        }


@dataclass
class HalfStepBuffer:
    """Intermediate embeddings of one party, rows aligned with ``InternalGraph.nodes``."""

    party: int
    nodes: list
    values: np.ndarray

    def __getitem__(self, key) -> np.ndarray:
        return self.values[self.nodes.index(key)]

    def placeholder_rows(self, num_internal: int) -> np.ndarray:
        return self.values[num_internal:]


@dataclass(frozen=True)
class Message:
    from_party: int
    to_party: int
    node: int
    layer: int
    payload: np.ndarray


def internal_propagate(
    ig: InternalGraph,
    h: np.ndarray,
    variant: Variant,
    layer: int = 0,
    meter: CostMeter | None = None,
) -> HalfStepBuffer:
    """First half-step on the internal graph.

    ``h`` holds one row per internal node; placeholder rows are pinned to zero
    before summation. The GCN variant then right-multiplies by the layer weight.
    """
    h = np.asarray(h, dtype=np.float64)
    if h.ndim == 1:
        h = h[:, None]
    if h.shape[0] != ig.num_internal:
        raise ValueError(
            f"party {ig.party}: got {h.shape[0]} embeddings for {ig.num_internal} internal nodes"
        )
    full = np.zeros((len(ig.nodes), h.shape[1]))
    full[: ig.num_internal] = h
    beta = beta_coeff(ig.sla_degree, variant)
    out = ig.operator @ (beta[:, None] * full)
    if meter is not None:
        meter.mul_adds += int(ig.operator.nnz) * h.shape[1]
    if isinstance(variant, GCN):
        w = variant.weights[layer]
        out = out @ w
        if meter is not None:
            meter.mul_adds += len(ig.nodes) * w.shape[0] * w.shape[1]
    return HalfStepBuffer(ig.party, ig.nodes, out)


def route_messages(
    half_steps: Sequence[HalfStepBuffer],
    placeholder_owners: Sequence[dict],
    layer: int = 0,
    meter: CostMeter | None = None,
) -> dict[int, list[Message]]:
    """Deliver each placeholder's partial sum to the party owning the real node.

    Inboxes are keyed by receiving party and ordered by (sender, node id).
    """
    inbox: dict[int, list[Message]] = {}
    for buf, owners in zip(half_steps, placeholder_owners):
        for row, key in enumerate(buf.nodes):
            if not isinstance(key, tuple):
                continue
            v, holder = key
            if key not in owners:
                raise KeyError(f"placeholder {key} has no owner annotation")
            to = owners[key]
            if to == holder:
                raise ValueError(f"placeholder {key} is owned by its own holder")
            payload = buf.values[row]
            inbox.setdefault(to, []).append(Message(holder, to, v, layer, payload))
            if meter is not None:
                meter.floats_sent += payload.shape[0]
                meter.messages += 1
    for msgs in inbox.values():
        msgs.sort(key=lambda msg: (msg.from_party, msg.node))
    if meter is not None:
        meter.exchange_rounds += 1
    return inbox


def border_propagate(
    bg: BorderGraph,
    ig: InternalGraph,
    own_half: HalfStepBuffer,
    inbox: Sequence[Message],
    variant: Variant,
    layer: int = 0,
    h0: np.ndarray | None = None,
    meter: CostMeter | None = None,
    gamma_hook: Callable | None = None,
) -> np.ndarray:
    """Second half-step: self term plus one received payload per border slot.

    Accumulates the self term first, then foreign parties in ascending id.
    Every internal node gets an output, including those with no slots.
    ``gamma_hook(party, node_ids, gamma)`` may rewrite the target weights; it
    exists for negative-control tests only.
    """
    n_int = ig.num_internal
    gamma = gamma_coeff(ig.sla_degree[:n_int], variant)
    if gamma_hook is not None:
        gamma = gamma_hook(ig.party, ig.nodes[:n_int], gamma.copy())
    half = own_half.values[:n_int]
    out = gamma[:, None] * half

    expected = {(u, j) for u, js in bg.slots.items() for j in js}
    seen: set[tuple[int, int]] = set()
    by_party: dict[int, tuple[list[int], list[np.ndarray]]] = {}
    for msg in inbox:
        slot = (msg.node, msg.from_party)
        if slot not in expected:
            raise ValueError(f"party {bg.party}: unexpected payload for slot {slot}")
        if slot in seen:
            raise ValueError(f"party {bg.party}: duplicate payload for slot {slot}")
        seen.add(slot)
        nodes, vals = by_party.setdefault(msg.from_party, ([], []))
        nodes.append(msg.node)
        vals.append(msg.payload)
    missing = expected - seen
    if missing:
        raise ValueError(f"party {bg.party}: missing payloads for slots {sorted(missing)[:5]}")
    internal_ids = np.asarray(ig.nodes[:n_int], dtype=np.int64)
    for j in sorted(by_party):
        nodes, vals = by_party[j]
        idx = np.searchsorted(internal_ids, nodes)
        out[idx] += gamma[idx, None] * np.asarray(vals)
    if meter is not None:
        meter.mul_adds += (n_int + len(seen)) * out.shape[1]

    if isinstance(variant, GCN):
        out = ACTIVATIONS[variant.activation](out)
    elif isinstance(variant, APPNP):
        if h0 is None:
            raise ValueError("APPNP needs the teleport anchor h0")
        out = (1.0 - variant.alpha) * out + variant.alpha * h0
    return out


@dataclass
class PartyData:
    internal: InternalGraph
    border: BorderGraph
    features: np.ndarray


def fedcog_run(
    parties: Sequence[PartyData | tuple],
    layers: int,
    variant: Variant = SGC(),
    order: Sequence[int] | None = None,
    keep_layers: bool = False,
    gamma_hook: Callable | None = None,
):
    """Run ``layers`` rounds of internal propagation, exchange, border propagation.

    Returns ``(embeddings, meter)`` where ``embeddings[i]`` has one row per
    internal node of party ``i``. With ``keep_layers`` the first element is a
    list of such per-party lists, one per layer (layer 0 = input features).
    ``order`` permutes the party processing order within each half-step; the
    barrier makes the result independent of it.
    """
    parties = [p if isinstance(p, PartyData) else PartyData(*p) for p in parties]
    m = len(parties)
    order = list(range(m)) if order is None else list(order)
    if sorted(order) != list(range(m)):
        raise ValueError("order must be a permutation of party indices")
    if isinstance(variant, GCN) and len(variant.weights) < layers:
        raise ValueError(f"GCN variant has {len(variant.weights)} weights for {layers} layers")
    for i, p in enumerate(parties):
        if p.internal.party != i or p.border.party != i:
            raise ValueError(f"party at position {i} is labelled {p.internal.party}")

    meter = CostMeter()
    h0 = [np.asarray(p.features, dtype=np.float64).reshape(p.internal.num_internal, -1) for p in parties]
    h = [x.copy() for x in h0]
    history = [[x.copy() for x in h]] if keep_layers else None
    owners = [p.internal.placeholder_owner for p in parties]
    for layer in range(layers):
        half: list = [None] * m
        for i in order:
            half[i] = internal_propagate(parties[i].internal, h[i], variant, layer, meter)
        inbox = route_messages(half, owners, layer, meter)
        nxt: list = [None] * m
        for i in order:
            nxt[i] = border_propagate(
                parties[i].border,
                parties[i].internal,
                half[i],
                inbox.get(i, []),
                variant,
                layer,
                h0[i],
                meter,
                gamma_hook,
            )
        h = nxt
        if keep_layers:
            history.append([x.copy() for x in h])
    return (history if keep_layers else h), meter


def gather(parties: Sequence[PartyData], per_party: Sequence[np.ndarray], num_nodes: int) -> np.ndarray:
    """Scatter per-party rows back into a global (num_nodes, dim) matrix."""
    dim = per_party[0].shape[1] if per_party else 0
    out = np.zeros((num_nodes, dim))
    for p, rows in zip(parties, per_party):
        ids = np.asarray(p.internal.nodes[: p.internal.num_internal], dtype=np.int64)
        out[ids] = rows
    return out
