"""Finite-difference oracle shared by the gradient tests."""

import math

import numpy as np

from ggae import autodiff as ad
from ggae.dataset import TradeGraph


def numeric_grad(loss_fn, params, step=1e-5):
    """Central differences of the scalar ``loss_fn()`` w.r.t. every entry of ``params``."""
    grads = []
    for p in params:
        g = np.zeros_like(p.values)
        for i in np.ndindex(*p.values.shape):
            orig = p.values[i]
            p.values[i] = orig + step
            plus = loss_fn().item()
            p.values[i] = orig - step
            minus = loss_fn().item()
            p.values[i] = orig
            g[i] = (plus - minus) / (2 * step)
        grads.append(g)
    return grads


def analytic_grad(loss_fn, params):
    for p in params:
        p.grad = None
    with ad.Tape() as tape:
        loss = loss_fn()
    ad.backward(loss, tape)
    # unreachable parameters get no grad; their true gradient is zero
    return [np.zeros_like(p.values) if p.grad is None else p.grad.copy() for p in params], tape


def relu_margin(tape):
    """Smallest |pre-activation| feeding any ReLU on the tape (inf if none)."""
    margins = [np.abs(r.inputs[0].values).min() for r in tape.records if r.name == "relu"]
    return min(margins, default=np.inf)


def max_rel_error(a, b, floor=1e-6):
    """Elementwise |a-b| / max(|a|, |b|, floor), maximised over all entries."""
    worst = 0.0
    for x, y in zip(a, b):
        denom = np.maximum(np.maximum(np.abs(x), np.abs(y)), floor)
        worst = max(worst, float(np.max(np.abs(x - y) / denom)))
    return worst


def make_graph(n, edges):
    m = len(edges)
    return TradeGraph([f"N{i}" for i in range(n)], np.zeros((n, 1)), edges, np.zeros(m), np.zeros(m))


def random_graph(rng, n, p=0.4):
    edges = [(u, v) for u in range(n) for v in range(n) if u != v and rng.random() < p]
    return make_graph(n, edges)


def brute_force_norm(n, edges):
    """Per-entry formula A~_ij / sqrt(d~_i d~_j) with explicit loops."""
    a = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    for u, v in edges:
        a[u][v] = 1.0
        a[v][u] = 1.0
    deg = [sum(row) for row in a]
    return np.array([[a[i][j] / math.sqrt(deg[i] * deg[j]) for j in range(n)] for i in range(n)])
