"""Node encoders: identity mapping and stacked GCN layers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .dataset import TradeGraph
from .errors import ConfigError, EmptyGraphError


@dataclass
class GcnLayerParams:
    weight: Tensor  # input_dim x output_dim
    activation: str = "relu"  # "relu" or "none"

    def __post_init__(self) -> None:
        if self.activation not in ("relu", "none"):
            raise ConfigError(f"unknown activation {self.activation!r}")
        self.weight.requires_grad = True


def normalize_adjacency(
    graph: TradeGraph, edge_subset: Iterable[int] | None = None
) -> np.ndarray:
    """Symmetrically normalized self-looped adjacency ``D^-1/2 (A + I) D^-1/2``.

    ``A`` is the 0/1 undirected union of the selected directed edges (all
    edges when ``edge_subset`` is None).
    """
    n = graph.num_nodes
    if n == 0:
        raise EmptyGraphError("graph has no nodes")
    idx = range(graph.num_edges) if edge_subset is None else edge_subset
    a = np.zeros((n, n))
    for k in idx:
        u, v = graph.edges[k]
        a[u, v] = a[v, u] = 1.0
    np.fill_diagonal(a, 1.0)
    d_inv_sqrt = 1.0 / np.sqrt(a.sum(axis=1))
    out = a * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]
    out.setflags(write=False)
    return out


def init_gcn_layers(
    in_dim: int, hidden_dim: int, n_layers: int, rng: np.random.Generator
) -> list[GcnLayerParams]:
    """Glorot-initialized stack; ReLU between layers, none on the last."""
    layers = []
    dim = in_dim
    for i in range(n_layers):
        last = i == n_layers - 1
        layers.append(
            GcnLayerParams(ad.glorot_uniform(dim, hidden_dim, rng), "none" if last else "relu")
        )
        dim = hidden_dim
    return layers


def gcn_forward(
    norm_adj: np.ndarray | Tensor, features: Tensor, layers: Sequence[GcnLayerParams]
) -> Tensor:
    adj = norm_adj if isinstance(norm_adj, Tensor) else ad.tensor(norm_adj)
    if features.rows != adj.rows:
        raise ConfigError(f"features have {features.rows} rows, graph has {adj.rows} nodes")
    h = features
    for k, layer in enumerate(layers):
        if layer.weight.rows != h.cols:
            raise ConfigError(
                f"layer {k} expects input dim {layer.weight.rows}, got {h.cols}"
            )
        h = ad.matmul(ad.matmul(adj, h), layer.weight)
        if layer.activation == "relu":
            h = ad.relu(h)
    return h


def identity_encode(features: Tensor) -> Tensor:
    return features
