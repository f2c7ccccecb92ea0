"""Dense-matrix reverse-mode differentiation with an Adam optimizer.

Every value is a 2-D float64 array. Operations executed while a :class:`Tape`
is active are recorded on it; :func:`backward` replays the tape in reverse.
Operations run outside any tape still compute values but cannot be
differentiated.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, DivergenceError

__all__ = [
    "Tensor",
    "Tape",
    "AdamState",
    "tensor",
    "parameter",
    "matmul",
    "add",
    "sub",
    "hadamard",
    "concat_cols",
    "relu",
    "sigmoid",
    "scalar_affine",
    "take_rows",
    "sum_all",
    "mse_loss",
    "backward",
    "adam_step",
    "glorot_uniform",
]


class Tensor:
    """A 2-D real matrix that may participate in differentiation."""

    __slots__ = ("values", "requires_grad", "grad")

    def __init__(self, values, requires_grad: bool = False):
        arr = np.array(values, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise DimensionError(f"Tensor must be 2-D, got {arr.ndim}-D")
        self.values = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def item(self) -> float:
        if self.values.size != 1:
            raise ContractError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.values[0, 0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def tensor(values) -> Tensor:
    """Constant (non-trainable) tensor."""
    return Tensor(values, requires_grad=False)


def parameter(values) -> Tensor:
    return Tensor(values, requires_grad=True)


@dataclass
class _Record:
    name: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    # maps upstream grad to one grad per input (None where no grad flows)
    backward: Callable[[np.ndarray], tuple[np.ndarray | None, ...]]


_local = threading.local()


def _stack() -> list["Tape"]:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager; tapes are thread-local so independent training
    contexts can run on separate threads.
    """

    def __init__(self) -> None:
        self.records: list[_Record] = []

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _stack().pop()

    def __len__(self) -> int:
        return len(self.records)

    def clear(self) -> None:
        self.records.clear()


def _active_tape() -> Tape | None:
    stack = _stack()
    return stack[-1] if stack else None


def _emit(out_values: np.ndarray, inputs: Sequence[Tensor], grad_fn, name: str) -> Tensor:
    if not np.all(np.isfinite(out_values)):
        raise DivergenceError(f"non-finite value produced by {name}")
    needs = any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.values = out_values
    out.requires_grad = needs
    out.grad = None
    tape = _active_tape()
    if needs and tape is not None:
        tape.records.append(_Record(name, tuple(inputs), out, grad_fn))
    return out


def _same_shape(a: Tensor, b: Tensor, name: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{name}: shape mismatch {a.shape} vs {b.shape}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise DimensionError(f"matmul: shape mismatch {a.shape} @ {b.shape}")
    av, bv = a.values, b.values
    ga, gb = a.requires_grad, b.requires_grad

    def grad_fn(g):
        return (g @ bv.T if ga else None, av.T @ g if gb else None)

    return _emit(av @ bv, (a, b), grad_fn, "matmul")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return _emit(a.values + b.values, (a, b), lambda g: (g, g), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return _emit(a.values - b.values, (a, b), lambda g: (g, -g), "sub")


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "hadamard")
    av, bv = a.values, b.values
    return _emit(av * bv, (a, b), lambda g: (g * bv, g * av), "hadamard")


def concat_cols(*parts: Tensor) -> Tensor:
    """Horizontal concatenation; all parts must share a row count."""
    if len(parts) < 2:
        raise ContractError("concat_cols needs at least two tensors")
    rows = parts[0].rows
    for p in parts[1:]:
        if p.rows != rows:
            raise DimensionError(
                f"concat_cols: row mismatch {parts[0].shape} vs {p.shape}"
            )
    edges = np.cumsum([0] + [p.cols for p in parts])

    def grad_fn(g):
        return tuple(g[:, edges[i] : edges[i + 1]] for i in range(len(parts)))

    return _emit(np.hstack([p.values for p in parts]), parts, grad_fn, "concat_cols")


def relu(a: Tensor) -> Tensor:
    # subgradient at 0 is 0
    mask = a.values > 0
    return _emit(np.where(mask, a.values, 0.0), (a,), lambda g: (np.where(mask, g, 0.0),), "relu")


def sigmoid(a: Tensor) -> Tensor:
    x = a.values
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _emit(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def scalar_affine(a: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Elementwise ``a * w + b`` with 1x1 tensors ``w`` and ``b``."""
    if w.shape != (1, 1) or b.shape != (1, 1):
        raise DimensionError(
            f"scalar_affine: w and b must be 1x1, got {w.shape} and {b.shape}"
        )
    av, wv = a.values, w.values[0, 0]

    def grad_fn(g):
        return g * wv, np.array([[np.sum(g * av)]]), np.array([[np.sum(g)]])

    return _emit(av * wv + b.values[0, 0], (a, w, b), grad_fn, "scalar_affine")


def take_rows(a: Tensor, index) -> Tensor:
    """Gather rows ``a[index]``; repeated indices accumulate on backward."""
    idx = np.asarray(index, dtype=np.intp)
    if idx.ndim != 1:
        raise DimensionError("take_rows: index must be 1-D")
    if idx.size and (idx.min() < 0 or idx.max() >= a.rows):
        raise DimensionError(f"take_rows: index out of range for {a.shape}")
    n = a.rows

    def grad_fn(g):
        # bincount per column is much faster than np.add.at
        cols = [np.bincount(idx, weights=g[:, j], minlength=n) for j in range(g.shape[1])]
        return (np.stack(cols, axis=1),)

    return _emit(a.values[idx], (a,), grad_fn, "take_rows")


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _emit(
        np.array([[a.values.sum()]]), (a,), lambda g: (np.full(shape, g[0, 0]),), "sum"
    )


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean squared error as a 1x1 tensor."""
    _same_shape(pred, target, "mse_loss")
    diff = pred.values - target.values
    n = diff.size
    value = np.array([[np.mean(diff * diff)]])
    return _emit(
        value,
        (pred, target),
        lambda g: (g[0, 0] * 2.0 * diff / n, -g[0, 0] * 2.0 * diff / n),
        "mse_loss",
    )


def backward(loss: Tensor, tape: Tape) -> None:
    """Populate ``.grad`` on every trainable leaf reachable from ``loss``.

    Records are visited in exact reverse recording order. Gradients add into
    any existing ``.grad``; :func:`adam_step` clears them after each update.
    """
    if loss.shape != (1, 1):
        raise ContractError(f"backward needs a 1x1 loss, got {loss.shape}")
    produced = {id(r.output) for r in tape.records}
    grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    leaves: dict[int, Tensor] = {}
    for rec in reversed(tape.records):
        g = grads.pop(id(rec.output), None)
        if g is None:
            continue
        for inp, gi in zip(rec.inputs, rec.backward(g)):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            grads[key] = grads[key] + gi if key in grads else gi
            if key not in produced:
                leaves[key] = inp
    if id(loss) not in produced and loss.requires_grad:
        leaves[id(loss)] = loss
    for key, leaf in leaves.items():
        g = grads[key]
        leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[int, np.ndarray] = field(default_factory=dict)
    v: dict[int, np.ndarray] = field(default_factory=dict)


def adam_step(params: Sequence[Tensor], state: AdamState) -> None:
    """One bias-corrected Adam update in place; clears grads afterwards."""
    for p in params:
        if p.grad is None:
            raise ContractError(f"parameter {p!r} has no gradient")
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for p in params:
        key = id(p)
        g = p.grad
        if key not in state.m:
            state.m[key] = np.zeros_like(p.values)
            state.v[key] = np.zeros_like(p.values)
        m = state.m[key] = state.beta1 * state.m[key] + (1.0 - state.beta1) * g
        v = state.v[key] = state.beta2 * state.v[key] + (1.0 - state.beta2) * g * g
        p.values = p.values - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        if not np.all(np.isfinite(p.values)):
            raise DivergenceError("non-finite parameter after Adam step")
        p.grad = None


def glorot_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return parameter(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
