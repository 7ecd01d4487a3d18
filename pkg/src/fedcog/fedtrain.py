"""Federated training of task heads on fixed, pre-propagated embeddings."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from . import learn

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FedAvg:
    lr: float = 0.1


@dataclass(frozen=True)
class FedAdagrad:
    lr: float = 0.1
    tau: float = 1e-3
    adaptive: bool = True


@dataclass(frozen=True)
class FedAdam:
    lr: float = 0.01
    tau: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.99
    adaptive: bool = True


@dataclass(frozen=True)
class FedDyn:
    lr: float = 0.1
    alpha: float = 0.01


Algorithm = Union[FedAvg, FedAdagrad, FedAdam, FedDyn]


def make_algorithm(name: str, **kwargs) -> Algorithm:
    table = {"fedavg": FedAvg, "fedadagrad": FedAdagrad, "fedadam": FedAdam, "feddyn": FedDyn}
    try:
        cls = table[name.lower()]
    except KeyError:
        raise ValueError(f"unknown federated algorithm {name!r}") from None
    return cls(**kwargs)


@dataclass
class ServerState:
    params: object
    algo: Algorithm
    moments: dict = field(default_factory=dict)
    round: int = 0


@dataclass(frozen=True)
class TrainConfig:
    rounds: int
    algo: Algorithm = FedAvg()
    local_epochs: int = 1
    participation: float = 1.0
    seed: int = 0
    learning_rate: float | None = None

    def __post_init__(self):
        if not 0.0 < self.participation <= 1.0:
            raise ValueError("participation must lie in (0, 1]")
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if self.local_epochs < 1:
            raise ValueError("local_epochs must be >= 1")

    @property
    def client_lr(self) -> float:
        return self.algo.lr if self.learning_rate is None else self.learning_rate


Objective = Callable[[object], tuple]


@dataclass
class TrainParty:
    """One party's local objective: ``objective(params) -> (loss, grad_params)``."""

    party: int
    objective: Objective
    num_samples: int


def node_party(party: int, embeddings: np.ndarray, labels: np.ndarray, train_rows) -> TrainParty:
    rows = np.asarray(train_rows, dtype=np.int64)

    def objective(params):
        return learn.classify_loss_grad(embeddings, params, labels, rows)

    return TrainParty(party, objective, len(rows))


def link_party(party: int, embeddings: np.ndarray, pairs: np.ndarray, targets: np.ndarray) -> TrainParty:
    """``pairs`` index rows of ``embeddings`` (the party's own nodes)."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)

    def objective(params):
        return learn.link_loss_grad(embeddings, params, pairs, targets)

    return TrainParty(party, objective, len(pairs))


def _axpy(a: float, xs, ys):
    return [y + a * x for x, y in zip(xs, ys)]


def feddyn_penalty(local, server, linear, alpha: float):
    """Dynamic regulariser ``-<linear, local> + alpha/2 ||local - server||^2`` and its gradient."""
    value = 0.0
    grads = []
    for t, s, g in zip(local, server, linear):
        diff = t - s
        value += float(-(g * t).sum() + 0.5 * alpha * (diff * diff).sum())
        grads.append(-g + alpha * diff)
    return value, grads


def local_round(
    party: TrainParty,
    params,
    local_epochs: int = 1,
    lr: float = 0.1,
    dyn_linear: list | None = None,
    dyn_alpha: float = 0.0,
):
    """Train locally from the server model.

    Returns ``(contribution, sample_count, loss)``. With one epoch the
    contribution is the exact local gradient; with more it is the parameter
    change ``(theta - theta_local) / lr``, i.e. the delta expressed in gradient
    units so the server step size keeps its meaning. Under FedDyn the
    dynamic penalty gradient is added to every local step.
    """
    if party.num_samples == 0:
        return None, 0, float("nan")
    server = [a.copy() for a in params.arrays()]
    current = params
    first_loss = None
    for epoch in range(local_epochs):
        loss, grad = party.objective(current)
        if first_loss is None:
            first_loss = loss
        g = grad.arrays()
        if dyn_linear is not None:
            _, pen = feddyn_penalty(current.arrays(), server, dyn_linear, dyn_alpha)
            g = [a + b for a, b in zip(g, pen)]
        if local_epochs == 1:
            return g, party.num_samples, first_loss
        current = current.with_arrays(_axpy(-lr, g, current.arrays()))
    delta = [(s - t) / lr for s, t in zip(server, current.arrays())]
    return delta, party.num_samples, first_loss


def aggregate(contributions: Sequence, sample_counts: Sequence[int]):
    """Sample-count weighted average, accumulated in the given (ascending party) order."""
    items = [(c, n) for c, n in zip(contributions, sample_counts) if c is not None and n > 0]
    if not items:
        raise ValueError("no non-empty contributions to aggregate")
    total = float(sum(n for _, n in items))
    out = [np.zeros_like(np.asarray(a, dtype=np.float64)) for a in items[0][0]]
    for contrib, n in items:
        p = n / total
        out = [o + p * np.asarray(c, dtype=np.float64) for o, c in zip(out, contrib)]
    return out


def server_step(state: ServerState, agg, participation_scale: float = 1.0) -> ServerState:
    """Apply one server update; returns a new state."""
    theta = state.params.arrays()
    if len(agg) != len(theta) or any(a.shape != t.shape for a, t in zip(agg, theta)):
        raise ValueError("aggregate does not match parameter shapes")
    algo = state.algo
    moments = {k: [a.copy() for a in v] for k, v in state.moments.items()}

    if isinstance(algo, FedAvg):
        new = [t - algo.lr * g for t, g in zip(theta, agg)]
    elif isinstance(algo, FedAdagrad):
        if not algo.adaptive:
            new = [t - algo.lr * g for t, g in zip(theta, agg)]
        else:
            v = moments.get("v", [np.zeros_like(t) for t in theta])
            v = [vi + g * g for vi, g in zip(v, agg)]
            moments["v"] = v
            new = [t - algo.lr * g / (np.sqrt(vi) + algo.tau) for t, g, vi in zip(theta, agg, v)]
    elif isinstance(algo, FedAdam):
        m = moments.get("m", [np.zeros_like(t) for t in theta])
        m = [algo.beta1 * mi + (1.0 - algo.beta1) * g for mi, g in zip(m, agg)]
        moments["m"] = m
        if not algo.adaptive:
            new = [t - algo.lr * mi for t, mi in zip(theta, m)]
        else:
            v = moments.get("v", [np.zeros_like(t) for t in theta])
            v = [algo.beta2 * vi + (1.0 - algo.beta2) * g * g for vi, g in zip(v, agg)]
            moments["v"] = v
            new = [t - algo.lr * mi / (np.sqrt(vi) + algo.tau) for t, mi, vi in zip(theta, m, v)]
    elif isinstance(algo, FedDyn):
        h = moments.get("h", [np.zeros_like(t) for t in theta])
        avg = [t - algo.lr * g for t, g in zip(theta, agg)]
        h = [hi - algo.alpha * participation_scale * (a - t) for hi, a, t in zip(h, avg, theta)]
        moments["h"] = h
        new = [a - hi / algo.alpha for a, hi in zip(avg, h)]
    else:
        raise TypeError(f"unsupported algorithm {algo!r}")
    return ServerState(state.params.with_arrays(new), algo, moments, state.round + 1)


def global_loss(parties: Sequence[TrainParty], params) -> float:
    total, n = 0.0, 0
    for p in parties:
        if p.num_samples:
            loss, _ = p.objective(params)
            total += loss * p.num_samples
            n += p.num_samples
    return total / n if n else float("nan")


def federated_train(
    parties: Sequence[TrainParty],
    config: TrainConfig,
    params,
    evaluate: Callable[[object], float] | None = None,
    on_round: Callable[[dict], None] | None = None,
):
    """Rounds of sample -> local_round -> aggregate -> server_step.

    Returns ``(params, history)``; each history record carries the round
    number, the global training loss after the update, the evaluation metric
    (if ``evaluate`` is given), and the floats uploaded that round.
    """
    parties = sorted(parties, key=lambda p: p.party)
    if not any(p.num_samples for p in parties):
        raise ValueError("no party has training samples")
    rng = np.random.default_rng(config.seed)
    algo = config.algo
    m = len(parties)
    per_round = max(1, int(math.ceil(config.participation * m - 1e-9)))
    n_params = learn.num_parameters(params)
    state = ServerState(params.copy(), algo)
    dyn_lin = {}
    if isinstance(algo, FedDyn):
        dyn_lin = {p.party: [np.zeros_like(a) for a in params.arrays()] for p in parties}
    history: list[dict] = []

    for t in range(config.rounds):
        if per_round == m:
            chosen = list(range(m))
        else:
            chosen = sorted(rng.choice(m, size=per_round, replace=False).tolist())
        contribs, counts = [], []
        lr = algo.lr if isinstance(algo, FedDyn) else config.client_lr
        for k in chosen:
            p = parties[k]
            c, n, _ = local_round(
                p,
                state.params,
                config.local_epochs,
                lr,
                dyn_linear=dyn_lin.get(p.party),
                dyn_alpha=getattr(algo, "alpha", 0.0),
            )
            if c is None:
                continue
            contribs.append(c)
            counts.append(n)
            if isinstance(algo, FedDyn):
                local = [s - lr * ci for s, ci in zip(state.params.arrays(), c)]
                dyn_lin[p.party] = [
                    g - algo.alpha * (lo - s)
                    for g, lo, s in zip(dyn_lin[p.party], local, state.params.arrays())
                ]
        if not contribs:
            record = {"round": t + 1, "loss": global_loss(parties, state.params), "metric": None, "floats_up": 0}
            history.append(record)
            continue
        agg = aggregate(contribs, counts)
        state = server_step(state, agg, participation_scale=len(contribs) / m)
        record = {
            "round": t + 1,
            "loss": global_loss(parties, state.params),
            "metric": evaluate(state.params) if evaluate else None,
            "floats_up": n_params * len(contribs),
        }
        history.append(record)
        if on_round:
            on_round(record)
        log.debug("round %d loss %.6f", t + 1, record["loss"])
    return state.params, history


def centralized_train(objective: Objective, params, rounds: int, lr: float):
    """Plain gradient descent; returns the parameter trajectory (initial included)."""
    traj = [params.copy()]
    for _ in range(rounds):
        _, grad = objective(params)
        params = params.with_arrays(_axpy(-lr, grad.arrays(), params.arrays()))
        traj.append(params.copy())
    return traj
