"""Independent reference computations used by the tests.

Nothing here calls into the propagation code of the package; matrices are
built densely from the graph's edge list.
"""

import itertools

import numpy as np


def dense_adjacency(n, edges):
    a = np.zeros((n, n))
    for u, v in edges:
        a[u, v] = a[v, u] = 1.0
    return a


def dense_operator(n, edges, r=0.5):
    """D^{r-1} (A+I) D^{-r} with D the self-loop-augmented degree."""
    a = dense_adjacency(n, edges) + np.eye(n)
    d = a.sum(axis=1)
    return np.diag(d ** (r - 1.0)) @ a @ np.diag(d ** (-r))


def dense_sgc(n, edges, x, layers, r=0.5):
    s = dense_operator(n, edges, r)
    h = np.asarray(x, dtype=float)
    for _ in range(layers):
        h = s @ h
    return h


def dense_appnp(n, edges, x, layers, alpha):
    s = dense_operator(n, edges, 0.5)
    h0 = np.asarray(x, dtype=float)
    h = h0
    for _ in range(layers):
        h = (1 - alpha) * (s @ h) + alpha * h0
    return h


def dense_gcn(n, edges, x, weights, act=lambda z: np.maximum(z, 0.0)):
    s = dense_operator(n, edges, 0.5)
    h = np.asarray(x, dtype=float)
    for w in weights:
        h = act(s @ h @ w)
    return h


def finite_diff(f, arrays, eps=1e-5):
    """Central differences of scalar ``f(arrays)`` w.r.t. every entry of every array."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            old = a[idx]
            a[idx] = old + eps
            fp = f(arrays)
            a[idx] = old - eps
            fm = f(arrays)
            a[idx] = old
            g[idx] = (fp - fm) / (2 * eps)
        grads.append(g)
    return grads


def brute_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    total = 0.0
    for p, q in itertools.product(pos, neg):
        total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def balanced_two_cuts(n, edges):
    """Every split of ``range(n)`` into halves, with its edge cut (brute force)."""
    out = []
    for side in itertools.combinations(range(n), n // 2):
        s = set(side)
        cut = sum((u in s) != (v in s) for u, v in edges)
        out.append((cut, frozenset(s)))
    return out
