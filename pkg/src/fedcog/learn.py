"""Task heads trained on propagated embeddings, data splits, and metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit, log_softmax, softmax
from scipy.stats import rankdata

from .graph import GlobalGraph

LINK_DIM = 100


@dataclass
class ClassifierParams:
    """Softmax classifier: one linear layer, or linear-ReLU-linear."""

    weights: list
    biases: list

    @classmethod
    def init(cls, in_dim: int, num_classes: int, hidden: int | None = None, seed: int = 0, scale: float = 0.0):
        rng = np.random.default_rng(seed)
        dims = [in_dim] + ([hidden] if hidden else []) + [num_classes]
        weights, biases = [], []
        for a, b in zip(dims[:-1], dims[1:]):
            # a hidden layer needs symmetry breaking; a lone linear layer starts at zero
            s = scale if scale else (np.sqrt(2.0 / a) if hidden else 0.0)
            weights.append(rng.normal(scale=s, size=(a, b)) if s else np.zeros((a, b)))
            biases.append(np.zeros(b))
        return cls(weights, biases)

    def arrays(self) -> list[np.ndarray]:
        return [x for pair in zip(self.weights, self.biases) for x in pair]

    def with_arrays(self, arrays) -> "ClassifierParams":
        arrays = list(arrays)
        return ClassifierParams(arrays[0::2], arrays[1::2])

    def copy(self) -> "ClassifierParams":
        return self.with_arrays([a.copy() for a in self.arrays()])


@dataclass
class LinkModelParams:
    projection: np.ndarray

    @classmethod
    def init(cls, in_dim: int, out_dim: int = LINK_DIM, seed: int = 0, scale: float | None = None):
        rng = np.random.default_rng(seed)
        s = scale if scale is not None else (in_dim * np.sqrt(out_dim)) ** -0.5
        return cls(rng.normal(scale=s, size=(in_dim, out_dim)))

    def arrays(self) -> list[np.ndarray]:
        return [self.projection]

    def with_arrays(self, arrays) -> "LinkModelParams":
        (p,) = list(arrays)
        return LinkModelParams(p)

    def copy(self) -> "LinkModelParams":
        return LinkModelParams(self.projection.copy())


def num_parameters(params) -> int:
    return int(sum(a.size for a in params.arrays()))


@dataclass(frozen=True)
class NodeSplit:
    train_ids: np.ndarray
    test_ids: np.ndarray


@dataclass(frozen=True)
class LinkSplit:
    train_pos: np.ndarray
    train_neg: np.ndarray
    test_pos: np.ndarray
    test_neg: np.ndarray


def _forward(h: np.ndarray, params: ClassifierParams):
    acts = [h]
    pre = []
    x = h
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = x @ w + b
        pre.append(z)
        x = z if k == last else np.maximum(z, 0.0)
        acts.append(x)
    return acts, pre


def predict_logits(h: np.ndarray, params: ClassifierParams) -> np.ndarray:
    return _forward(np.asarray(h, dtype=np.float64), params)[0][-1]


def classify_loss_grad(h, params: ClassifierParams, labels, mask):
    """Mean softmax cross-entropy over ``mask`` rows and its exact gradient."""
    mask = np.asarray(mask, dtype=np.int64).reshape(-1)
    if len(mask) == 0:
        raise ValueError("empty mask")
    x = np.asarray(h, dtype=np.float64)[mask]
    y = np.asarray(labels, dtype=np.int64)[mask]
    acts, pre = _forward(x, params)
    logits = acts[-1]
    logp = log_softmax(logits, axis=1)
    loss = float(-logp[np.arange(len(y)), y].mean())

    delta = softmax(logits, axis=1)
    delta[np.arange(len(y)), y] -= 1.0
    delta /= len(y)
    gw, gb = [], []
    for k in range(len(params.weights) - 1, -1, -1):
        gw.append(acts[k].T @ delta)
        gb.append(delta.sum(axis=0))
        if k:
            delta = (delta @ params.weights[k].T) * (pre[k - 1] > 0)
    return loss, ClassifierParams(gw[::-1], gb[::-1])


def link_scores(h: np.ndarray, params: LinkModelParams, pairs) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    z = np.asarray(h, dtype=np.float64) @ params.projection
    return expit((z[pairs[:, 0]] * z[pairs[:, 1]]).sum(axis=1))


def link_loss_grad(h, params: LinkModelParams, pairs, targets):
    """Mean binary cross-entropy of ``sigmoid(<h_u P, h_v P>)`` and its gradient in ``P``."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    t = np.asarray(targets, dtype=np.float64).reshape(-1)
    if len(pairs) == 0:
        raise ValueError("empty batch")
    h = np.asarray(h, dtype=np.float64)
    hu, hv = h[pairs[:, 0]], h[pairs[:, 1]]
    zu, zv = hu @ params.projection, hv @ params.projection
    s = (zu * zv).sum(axis=1)
    loss = float(-(t * log_expit(s) + (1.0 - t) * log_expit(-s)).mean())
    ds = (expit(s) - t) / len(t)
    grad = hu.T @ (ds[:, None] * zv) + hv.T @ (ds[:, None] * zu)
    return loss, LinkModelParams(grad)


def sample_node_split(g: GlobalGraph, per_class: int, test_size: int, seed: int = 0) -> NodeSplit:
    """``per_class`` training nodes per class, then ``test_size`` uniform test nodes from the rest."""
    rng = np.random.default_rng(seed)
    train = []
    for c in range(g.num_classes):
        ids = np.flatnonzero(g.labels == c)
        if len(ids) < per_class:
            raise ValueError(f"class {c} has {len(ids)} nodes, need {per_class}")
        train.append(rng.choice(ids, size=per_class, replace=False))
    train_ids = np.sort(np.concatenate(train)) if train else np.zeros(0, dtype=np.int64)
    rest = np.setdiff1d(np.arange(g.num_nodes), train_ids)
    if len(rest) < test_size:
        raise ValueError(f"only {len(rest)} nodes left for a test set of {test_size}")
    test_ids = np.sort(rng.choice(rest, size=test_size, replace=False))
    return NodeSplit(train_ids, test_ids)


def sample_link_split(g: GlobalGraph, train_frac: float, seed: int = 0) -> LinkSplit:
    """Split edges into train/test positives and pair each with a uniform non-edge."""
    if g.num_edges < 4:
        raise ValueError("need at least 4 edges")
    rng = np.random.default_rng(seed)
    n = g.num_nodes
    perm = rng.permutation(g.num_edges)
    n_train = int(round(train_frac * g.num_edges))
    n_train = min(max(n_train, 1), g.num_edges - 1)
    pos = g.edges[perm]
    need = g.num_edges
    total_pairs = n * (n - 1) // 2
    if total_pairs - g.num_edges < need:
        raise ValueError("graph too dense to draw enough negative pairs")

    taken = set((g.edges[:, 0] * n + g.edges[:, 1]).tolist())
    neg = []
    while len(neg) < need:
        batch = rng.integers(0, n, size=(2 * (need - len(neg)) + 16, 2))
        for a, b in batch.tolist():
            if a == b:
                continue
            a, b = min(a, b), max(a, b)
            key = a * n + b
            if key in taken:
                continue
            taken.add(key)
            neg.append((a, b))
            if len(neg) == need:
                break
    neg = np.asarray(neg, dtype=np.int64)
    return LinkSplit(pos[:n_train], neg[:n_train], pos[n_train:], neg[n_train:])


def accuracy(pred_labels, true_labels, mask=None) -> float:
    pred = np.asarray(pred_labels)
    true = np.asarray(true_labels)
    if mask is not None:
        mask = np.asarray(mask, dtype=np.int64)
        pred, true = pred[mask], true[mask]
    if len(true) == 0:
        raise ValueError("empty mask")
    return float(np.mean(pred == true))


def auc(scores, binary_labels) -> float:
    """Mann-Whitney AUC; tied positive/negative pairs count one half."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(binary_labels).astype(bool)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes")
    ranks = rankdata(s)
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))
