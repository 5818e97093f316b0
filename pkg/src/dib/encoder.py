"""Per-feature stochastic encoders.

Each input feature is compressed through its own Gaussian channel: an
encoder maps the feature value to a diagonal Gaussian over latent space,
a sample of which is what the decoder sees.  The reference prior is the
standard normal, so the analytic KL of a code to the prior is the
channel's transmitted-information budget term (in nats).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import Layer, ParamStore, Rng, Tensor

LOG_VAR_MIN = -20.0
LOG_VAR_MAX = 20.0

ENCODER_KINDS = ("binary-table", "scalar-mlp", "shared-mlp")


class EncodingError(ValueError):
    """Raised for invalid encoder inputs or specs."""


@dataclass
class GaussianCode:
    """Diagonal Gaussian over latent space, one row per batch item.

    mu has shape (batch, dim); log_var is either (batch, dim) or (dim,)
    when the variance does not depend on the input (binary tables).
    """
    mu: Tensor
    log_var: Tensor

    @property
    def batch(self) -> int:
        return self.mu.shape[0]

    @property
    def dim(self) -> int:
        return self.mu.shape[-1]

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Plain numpy (mu, log_var), both broadcast to (batch, dim)."""
        mu = self.mu.value
        lv = np.broadcast_to(self.log_var.value, mu.shape)
        return mu, np.ascontiguousarray(lv)


@dataclass(frozen=True)
class EncoderSpec:
    """Architecture of one channel's encoder.

    binary-table: a learned (+mu, -mu) pair sharing one variance vector,
    for features that take values in {0, 1}.
    scalar-mlp: an MLP from one real feature to (mu, log_var).
    shared-mlp is reserved for weight-tied multi-feature schemes and is
    not implemented here.
    """
    kind: str
    latent_dim: int
    hidden: tuple[int, ...] = (128, 128)
    activation: str = "tanh"
    alpha: float = 0.0

    def __post_init__(self):
        if self.kind not in ENCODER_KINDS:
            raise EncodingError(f"unknown encoder kind {self.kind!r}")
        if self.kind == "shared-mlp":
            raise EncodingError("shared-mlp encoders are not supported")
        if self.latent_dim < 1:
            raise EncodingError("latent_dim must be positive")

    def mlp_layers(self) -> list[Layer]:
        body = [Layer(h, self.activation, self.alpha) for h in self.hidden]
        return body + [Layer(2 * self.latent_dim, "identity")]


def binary_table_spec(latent_dim: int = 8) -> EncoderSpec:
    return EncoderSpec("binary-table", latent_dim)


def scalar_mlp_spec(latent_dim: int = 32,
                    hidden: tuple[int, ...] = (128, 128)) -> EncoderSpec:
    return EncoderSpec("scalar-mlp", latent_dim, hidden)


# Encoder heads start with std 1e-2 so every channel opens at (almost)
# zero transmitted information and the compression sweep begins at the
# origin of the information plane.
HEAD_STD = 1e-2


def init_encoder(store: ParamStore, prefix: str, spec: EncoderSpec,
                 rng: Rng) -> None:
    if spec.kind == "binary-table":
        store.add(f"{prefix}/mu", HEAD_STD * rng.standard_normal((spec.latent_dim,)))
        store.add(f"{prefix}/log_var", np.zeros(spec.latent_dim))
    else:
        dc.init_mlp(store, f"{prefix}/mlp", 1, spec.mlp_layers(), rng,
                    head_std=HEAD_STD)


def encode(store: ParamStore, prefix: str, spec: EncoderSpec,
           x: np.ndarray) -> GaussianCode:
    """Encode a 1-d array of feature values into a GaussianCode."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise EncodingError(f"expected a 1-d feature column, got shape {x.shape}")
    if spec.kind == "binary-table":
        return _encode_binary(store, prefix, x)
    return _encode_scalar(store, prefix, spec, x)


def _encode_binary(store: ParamStore, prefix: str, x: np.ndarray) -> GaussianCode:
    if not np.all((x == 0.0) | (x == 1.0)):
        bad = x[(x != 0.0) & (x != 1.0)][0]
        raise EncodingError(
            f"binary-table encoder requires values in {{0, 1}}, got {bad!r}")
    sign = (2.0 * x - 1.0)[:, None]
    mu = dc.mul(sign, store[f"{prefix}/mu"])
    return GaussianCode(mu=mu, log_var=dc.as_tensor(store[f"{prefix}/log_var"]))


def _encode_scalar(store: ParamStore, prefix: str, spec: EncoderSpec,
                   x: np.ndarray) -> GaussianCode:
    out = dc.mlp_forward(store, f"{prefix}/mlp", Tensor(x[:, None]),
                         spec.mlp_layers())
    d = spec.latent_dim
    mu = dc.slice_cols(out, 0, d)
    log_var = dc.clip(dc.slice_cols(out, d, 2 * d), LOG_VAR_MIN, LOG_VAR_MAX)
    return GaussianCode(mu=mu, log_var=log_var)


def encode_np(store: ParamStore, prefix: str, spec: EncoderSpec,
              x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Tape-free twin of encode; returns (mu, log_var) as (batch, dim) arrays."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise EncodingError(f"expected a 1-d feature column, got shape {x.shape}")
    if spec.kind == "binary-table":
        if not np.all((x == 0.0) | (x == 1.0)):
            bad = x[(x != 0.0) & (x != 1.0)][0]
            raise EncodingError(
                f"binary-table encoder requires values in {{0, 1}}, got {bad!r}")
        mu = (2.0 * x - 1.0)[:, None] * store[f"{prefix}/mu"].value
        lv = np.broadcast_to(store[f"{prefix}/log_var"].value, mu.shape)
        return mu, lv.copy()
    out = dc.mlp_forward_np(store, f"{prefix}/mlp", x[:, None],
                            spec.mlp_layers())
    d = spec.latent_dim
    return out[:, :d], np.clip(out[:, d:], LOG_VAR_MIN, LOG_VAR_MAX)


def sample(code: GaussianCode, rng: Rng) -> Tensor:
    """Reparameterized draw u = mu + sigma * eps; differentiable in both."""
    eps = rng.standard_normal((code.batch, code.dim))
    sigma = dc.exp(dc.mul(code.log_var, 0.5))
    return dc.add(code.mu, dc.mul(sigma, eps))


def kl_to_prior(code: GaussianCode) -> Tensor:
    """Per-item KL(code || N(0, I)) in nats, shape (batch,).

    Closed form for diagonal Gaussians:
    0.5 * sum_d (mu^2 + exp(log_var) - 1 - log_var).
    """
    mu, lv = code.mu, code.log_var
    # a (dim,) log_var broadcasts against the (batch, dim) mean terms
    terms = dc.add(dc.mul(mu, mu), dc.exp(lv)) - 1.0 - lv
    return dc.mul(dc.sum_(terms, axis=1), 0.5)


def kl_to_prior_np(mu: np.ndarray, log_var: np.ndarray) -> np.ndarray:
    """Numpy twin of kl_to_prior for frozen models; rows in nats."""
    mu = np.asarray(mu, dtype=np.float64)
    lv = np.broadcast_to(np.asarray(log_var, dtype=np.float64), mu.shape)
    return 0.5 * np.sum(mu * mu + np.exp(lv) - 1.0 - lv, axis=-1)
