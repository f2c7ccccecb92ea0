"""Edge decoders.

All batched decoders take one row per edge: ``h_u`` and ``h_v`` are
``n x h`` tensors of endpoint embeddings and ``e_uv`` is ``n x k`` edge
features. Outputs are ``n x 1`` and, except for the link score, are read as
predicted log trade flow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DimensionError, DomainError

MLP_WIDTHS = (32, 16)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else ad.tensor(x)


def _ones(rows: int, cols: int) -> Tensor:
    return ad.tensor(np.ones((rows, cols)))


@dataclass(frozen=True)
class GravityParams:
    gamma: float = 1.0

    def __post_init__(self) -> None:
        if not self.gamma > 0:
            raise DomainError(f"gamma must be positive, got {self.gamma}")


def gravity_flow(gdp_u: float, gdp_v: float, dist: float, params: GravityParams = GravityParams()) -> float:
    """Classical gravity prediction ``gamma * gdp_u * gdp_v / dist``."""
    if not (gdp_u > 0 and gdp_v > 0 and dist > 0):
        raise DomainError("gravity_flow needs positive GDPs and distance")
    return params.gamma * gdp_u * gdp_v / dist


def log_gravity_flow(log_gdp_u, log_gdp_v, log_dist, gamma: float = 1.0):
    """Gravity prediction in log space; works elementwise on arrays."""
    return math.log(gamma) + np.asarray(log_gdp_u) + np.asarray(log_gdp_v) - np.asarray(log_dist)


def gae_link_score(h_u, h_v) -> Tensor:
    """``sigmoid(<h_u, h_v>)`` per row.

    Strictly inside (0, 1) except where float64 saturates (|dot| > ~36).
    """
    h_u, h_v = _as_tensor(h_u), _as_tensor(h_v)
    if h_u.shape != h_v.shape:
        raise DimensionError(f"gae_link_score: shape mismatch {h_u.shape} vs {h_v.shape}")
    dots = ad.matmul(ad.hadamard(h_u, h_v), _ones(h_u.cols, 1))
    return ad.sigmoid(dots)


def ggae_edge_embedding_log(h_u, h_v, e_uv) -> Tensor:
    """Log-space gravity edge embedding ``h_u + h_v - e_uv``.

    ``e_uv`` is one scalar per edge (``n x 1``), broadcast over the
    embedding columns.
    """
    h_u, h_v, e = _as_tensor(h_u), _as_tensor(h_v), _as_tensor(e_uv)
    if h_u.shape != h_v.shape:
        raise DimensionError(f"edge embedding: shape mismatch {h_u.shape} vs {h_v.shape}")
    if e.shape != (h_u.rows, 1):
        raise DimensionError(f"edge feature must be {(h_u.rows, 1)}, got {e.shape}")
    e_wide = e if h_u.cols == 1 else ad.matmul(e, _ones(1, h_u.cols))
    return ad.sub(ad.add(h_u, h_v), e_wide)


@dataclass
class GgaeLinearParams:
    """Affine read-out; ``w`` is stored as an ``h x 1`` column."""

    w: Tensor
    b: Tensor

    @classmethod
    def init(cls, dim: int, rng: np.random.Generator) -> "GgaeLinearParams":
        return cls(ad.glorot_uniform(dim, 1, rng), ad.parameter(np.zeros((1, 1))))

    def parameters(self) -> list[Tensor]:
        return [self.w, self.b]


def ggae_decode_linear(h_e, params: GgaeLinearParams) -> Tensor:
    h_e = _as_tensor(h_e)
    if params.w.shape != (h_e.cols, 1):
        raise DimensionError(f"linear decoder expects weight {(h_e.cols, 1)}, got {params.w.shape}")
    return ad.add(ad.matmul(h_e, params.w), ad.matmul(_ones(h_e.rows, 1), params.b))


@dataclass
class MlpParams:
    """Affine layers with ReLU between them (none after the last)."""

    weights: list[Tensor]
    biases: list[Tensor] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.biases:
            self.biases = [ad.parameter(np.zeros((1, w.cols))) for w in self.weights]
        if len(self.biases) != len(self.weights):
            raise ConfigError("MLP needs one bias per weight")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if b.shape != (1, w.cols):
                raise ConfigError(f"bias {i} has shape {b.shape}, expected {(1, w.cols)}")
            if i and self.weights[i - 1].cols != w.rows:
                raise ConfigError(f"layer {i} input dim {w.rows} != previous output {self.weights[i - 1].cols}")
            w.requires_grad = b.requires_grad = True

    @classmethod
    def init(
        cls, in_dim: int, rng: np.random.Generator, widths: Sequence[int] = MLP_WIDTHS
    ) -> "MlpParams":
        dims = [in_dim, *widths, 1]
        return cls([ad.glorot_uniform(a, b, rng) for a, b in zip(dims[:-1], dims[1:])])

    @property
    def in_dim(self) -> int:
        return self.weights[0].rows

    def parameters(self) -> list[Tensor]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]


def mlp_forward(x, params: MlpParams) -> Tensor:
    x = _as_tensor(x)
    if x.cols != params.in_dim:
        raise DimensionError(f"MLP expects input dim {params.in_dim}, got {x.cols}")
    ones = _ones(x.rows, 1)
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        x = ad.add(ad.matmul(x, w), ad.matmul(ones, b))
        if i < last:
            x = ad.relu(x)
    return x


def ggae_decode_mlp(h_e, params: MlpParams) -> Tensor:
    return mlp_forward(h_e, params)


def surrogate_decode(h_u, h_v, e_uv, params: MlpParams) -> Tensor:
    """MLP over the concatenation ``[h_u || h_v || e_uv]``."""
    h_u, h_v, e = _as_tensor(h_u), _as_tensor(h_v), _as_tensor(e_uv)
    if h_u.shape != h_v.shape:
        raise DimensionError(f"surrogate: shape mismatch {h_u.shape} vs {h_v.shape}")
    if e.rows != h_u.rows:
        raise DimensionError(f"surrogate: {e.rows} edge rows for {h_u.rows} embeddings")
    return mlp_forward(ad.concat_cols(h_u, h_v, e), params)
