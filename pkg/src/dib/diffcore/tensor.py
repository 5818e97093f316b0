"""Reverse-mode automatic differentiation over float64 numpy arrays.

A Tensor wraps a C-contiguous float64 array and records the operation
that produced it.  Calling backward() on a scalar result walks the
recorded graph in reverse topological order and accumulates gradients
into every node that requires them.  Only the operations this project
needs are provided; everything is computed in 64-bit and kept
deterministic (no threading, no in-place aliasing of graph values).
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


class GraphError(ValueError):
    """Raised when the autodiff contract is violated (shapes, scalar loss)."""


def _as_array(value) -> np.ndarray:
    arr = np.ascontiguousarray(value, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise GraphError("tensor values must be finite")
    return arr


class Tensor:
    """Array node in the computation graph.

    value is always float64 and row-major.  grad is allocated lazily by
    backward() and has the same shape as value.
    """

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, requires_grad: bool = False,
                 parents: tuple = (), backward: Callable | None = None):
        self.value = _as_array(value)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def size(self) -> int:
        return self.value.size

    def item(self) -> float:
        if self.value.size != 1:
            raise GraphError(f"item() needs a size-1 tensor, got shape {self.shape}")
        return float(self.value.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- graph walk ----------------------------------------------------

    def backward(self) -> None:
        """Accumulate d(self)/d(node) into node.grad for the whole graph.

        self must be a scalar (size 1); this is the loss contract.
        """
        if self.value.size != 1:
            raise GraphError(
                f"backward() requires a scalar loss, got shape {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    # -- operators -----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad down to shape, undoing numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _accumulate(node: Tensor, grad: np.ndarray) -> None:
    if not node.requires_grad:
        return
    if node.grad is None:
        node.grad = np.zeros_like(node.value)
    node.grad += grad


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_val = a.value + b.value

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return Tensor(out_val, parents=(a, b), backward=backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_val = a.value * b.value

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.value, a.shape))
        _accumulate(b, _unbroadcast(g * a.value, b.shape))

    return Tensor(out_val, parents=(a, b), backward=backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise GraphError(
            f"matmul needs 2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise GraphError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out_val = a.value @ b.value

    def backward(g):
        _accumulate(a, g @ b.value.T)
        _accumulate(b, a.value.T @ g)

    return Tensor(out_val, parents=(a, b), backward=backward)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out_val = np.tanh(a.value)

    def backward(g):
        _accumulate(a, g * (1.0 - out_val * out_val))

    return Tensor(out_val, parents=(a,), backward=backward)


def leaky_relu(a, alpha: float) -> Tensor:
    a = as_tensor(a)
    pos = a.value >= 0.0
    out_val = np.where(pos, a.value, alpha * a.value)

    def backward(g):
        _accumulate(a, g * np.where(pos, 1.0, alpha))

    return Tensor(out_val, parents=(a,), backward=backward)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out_val = np.exp(a.value)

    def backward(g):
        _accumulate(a, g * out_val)

    return Tensor(out_val, parents=(a,), backward=backward)


def softplus(a) -> Tensor:
    """log(1 + e^x), computed without overflow for large |x|."""
    a = as_tensor(a)
    out_val = np.maximum(a.value, 0.0) + np.log1p(np.exp(-np.abs(a.value)))

    def backward(g):
        # sigmoid(x), evaluated on the stable side of the exponential
        z = np.exp(-np.abs(a.value))
        sig = np.where(a.value >= 0.0, 1.0 / (1.0 + z), z / (1.0 + z))
        _accumulate(a, g * sig)

    return Tensor(out_val, parents=(a,), backward=backward)


def logsumexp(a, axis: int) -> Tensor:
    """Stabilized log-sum-exp reduction along one axis (keepdims off)."""
    a = as_tensor(a)
    m = np.max(a.value, axis=axis, keepdims=True)
    out_val = np.squeeze(m, axis=axis) + np.log(
        np.sum(np.exp(a.value - m), axis=axis))

    def backward(g):
        soft = np.exp(a.value - np.expand_dims(out_val, axis))
        _accumulate(a, np.expand_dims(g, axis) * soft)

    return Tensor(out_val, parents=(a,), backward=backward)


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp values to [lo, hi]; gradient is zero outside the interval."""
    a = as_tensor(a)
    out_val = np.clip(a.value, lo, hi)
    inside = (a.value >= lo) & (a.value <= hi)

    def backward(g):
        _accumulate(a, g * inside)

    return Tensor(out_val, parents=(a,), backward=backward)


def sum_(a, axis: int | None = None) -> Tensor:
    a = as_tensor(a)
    out_val = a.value.sum(axis=axis)

    def backward(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.shape).copy())
        else:
            _accumulate(a, np.broadcast_to(np.expand_dims(g, axis), a.shape).copy())

    return Tensor(out_val, parents=(a,), backward=backward)


def mean(a, axis: int | None = None) -> Tensor:
    a = as_tensor(a)
    n = a.size if axis is None else a.shape[axis]
    return mul(sum_(a, axis=axis), 1.0 / n)


def concat(parts: Sequence[Tensor], axis: int = 1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    out_val = np.concatenate([p.value for p in parts], axis=axis)
    widths = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + widths)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accumulate(p, g[tuple(sl)])

    return Tensor(out_val, parents=tuple(parts), backward=backward)


def slice_cols(a, start: int, stop: int) -> Tensor:
    a = as_tensor(a)
    if a.value.ndim != 2:
        raise GraphError(f"slice_cols needs a 2-d tensor, got {a.shape}")
    out_val = a.value[:, start:stop].copy()

    def backward(g):
        full = np.zeros_like(a.value)
        full[:, start:stop] = g
        _accumulate(a, full)

    return Tensor(out_val, parents=(a,), backward=backward)


def identity(a) -> Tensor:
    return as_tensor(a)


def finite_difference_gradient(fn: Callable[[np.ndarray], float],
                               x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function; the autodiff oracle."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn(x)
        flat[i] = orig - h
        fm = fn(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad
