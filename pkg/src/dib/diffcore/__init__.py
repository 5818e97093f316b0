"""Numerical substrate: autodiff tensors, MLPs, Adam, seeded RNG, checkpoints."""
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .nn import (AdamState, Layer, ParamStore, TrainingDiverged, adam_step,
                 init_mlp, mlp_forward, mlp_forward_np)
from .rng import Rng
from .tensor import (GraphError, Tensor, add, as_tensor, clip, concat, exp,
                     finite_difference_gradient, identity, leaky_relu,
                     logsumexp, matmul, mean, mul, slice_cols, softplus,
                     sum_, tanh)

__all__ = [
    "AdamState", "CheckpointError", "GraphError", "Layer", "ParamStore",
    "Rng", "Tensor", "TrainingDiverged", "adam_step", "add", "as_tensor",
    "clip", "concat", "exp", "finite_difference_gradient", "identity",
    "init_mlp", "leaky_relu", "load_checkpoint", "logsumexp", "matmul",
    "mean", "mlp_forward", "mlp_forward_np", "mul", "save_checkpoint", "slice_cols",
    "softplus", "sum_", "tanh",
]
