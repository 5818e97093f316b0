"""Parameter storage, MLP forward pass, and Adam.

Parameters live in a ParamStore keyed by path strings; iteration is
always in sorted path order so optimizer updates and checkpoints are
order-stable.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import Rng
from .tensor import GraphError, Tensor, leaky_relu, matmul, tanh


class TrainingDiverged(RuntimeError):
    """Raised when a non-finite gradient or loss is encountered."""


@dataclass(frozen=True)
class Layer:
    """One dense layer: output width plus activation name.

    activation is one of "tanh", "lrelu" (slope alpha), "identity".
    """
    width: int
    activation: str = "identity"
    alpha: float = 0.0

    def __post_init__(self):
        if self.activation not in ("tanh", "lrelu", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")


class ParamStore:
    """Named float64 parameters with a mirrored gradient buffer."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, path: str, value: np.ndarray) -> Tensor:
        if path in self._params:
            raise ValueError(f"duplicate parameter path {path!r}")
        t = Tensor(value, requires_grad=True)
        self._params[path] = t
        return t

    def __getitem__(self, path: str) -> Tensor:
        try:
            return self._params[path]
        except KeyError:
            raise KeyError(f"no parameter at path {path!r}") from None

    def __contains__(self, path: str) -> bool:
        return path in self._params

    def __len__(self) -> int:
        return len(self._params)

    def paths(self) -> list[str]:
        return sorted(self._params)

    def items(self) -> list[tuple[str, Tensor]]:
        return [(p, self._params[p]) for p in self.paths()]

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p: t.value.copy() for p, t in self.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise ValueError(
                f"parameter set mismatch: missing {sorted(missing)}, "
                f"unexpected {sorted(extra)}")
        for path, value in state.items():
            t = self._params[path]
            arr = np.asarray(value, dtype=np.float64)
            if arr.shape != t.value.shape:
                raise ValueError(
                    f"shape mismatch at {path!r}: {arr.shape} vs {t.value.shape}")
            t.value = np.ascontiguousarray(arr)


_GAINS = {"tanh": 1.0, "identity": 1.0}


def init_mlp(store: ParamStore, prefix: str, in_dim: int,
             layers: list[Layer], rng: Rng, head_std: float | None = None) -> None:
    """Create W/b parameters for a stack of dense layers.

    Weights are normal with std gain/sqrt(fan_in); head_std overrides the
    final layer's std (used to start encoders near their prior).
    """
    fan_in = in_dim
    for i, layer in enumerate(layers):
        if layer.activation == "lrelu":
            gain = np.sqrt(2.0 / (1.0 + layer.alpha ** 2))
        else:
            gain = _GAINS[layer.activation]
        std = gain / np.sqrt(fan_in)
        if head_std is not None and i == len(layers) - 1:
            std = head_std
        w = std * rng.standard_normal((fan_in, layer.width))
        store.add(f"{prefix}/layer{i}/W", w)
        store.add(f"{prefix}/layer{i}/b", np.zeros(layer.width))
        fan_in = layer.width


def mlp_forward(store: ParamStore, prefix: str, x: Tensor,
                layers: list[Layer]) -> Tensor:
    """Apply the dense stack under prefix to a (batch, in_dim) tensor."""
    h = x
    for i, layer in enumerate(layers):
        w = store[f"{prefix}/layer{i}/W"]
        b = store[f"{prefix}/layer{i}/b"]
        if h.shape[1] != w.shape[0]:
            raise GraphError(
                f"{prefix}/layer{i}: input width {h.shape[1]} does not match "
                f"weight shape {w.value.shape}")
        h = matmul(h, w) + b
        if layer.activation == "tanh":
            h = tanh(h)
        elif layer.activation == "lrelu":
            h = leaky_relu(h, layer.alpha)
    return h


def mlp_forward_np(store: ParamStore, prefix: str, x: np.ndarray,
                   layers: list[Layer]) -> np.ndarray:
    """Tape-free twin of mlp_forward for frozen-model evaluation."""
    h = np.asarray(x, dtype=np.float64)
    for i, layer in enumerate(layers):
        h = h @ store[f"{prefix}/layer{i}/W"].value
        h = h + store[f"{prefix}/layer{i}/b"].value
        if layer.activation == "tanh":
            h = np.tanh(h)
        elif layer.activation == "lrelu":
            h = np.where(h > 0.0, h, layer.alpha * h)
    return h


@dataclass
class AdamState:
    """Adam moment accumulators; step counts completed updates."""
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(store: ParamStore, state: AdamState) -> None:
    """One bias-corrected Adam update over all parameters in path order.

    Parameters with no gradient (never touched by backward) are treated
    as zero-gradient.  A non-finite gradient aborts before any parameter
    is modified.
    """
    grads: dict[str, np.ndarray] = {}
    for path, t in store.items():
        g = t.grad if t.grad is not None else np.zeros_like(t.value)
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"non-finite gradient at parameter {path!r}")
        grads[path] = g
    t_next = state.step + 1
    c1 = 1.0 - state.beta1 ** t_next
    c2 = 1.0 - state.beta2 ** t_next
    for path, tensor in store.items():
        g = grads[path]
        m = state.m.get(path)
        if m is None:
            m = np.zeros_like(tensor.value)
            state.m[path] = m
            state.v[path] = np.zeros_like(tensor.value)
        v = state.v[path]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        update = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        tensor.value = tensor.value - update
    state.step = t_next
