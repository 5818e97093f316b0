"""Training loop for the distributed bottleneck objective.

Each input feature passes through its own stochastic channel; a decoder
predicts the binary label from the concatenated latent samples.  The
scalar loss is

    beta * sum_i mean KL(channel_i || prior)  +  mean cross-entropy

with beta annealed along a logarithmic schedule, so one run traces a
whole spectrum of models from wide-open channels to fully closed ones.
Checkpoints taken along the way are re-measured later for tight
information estimates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from . import diffcore as dc
from .diffcore import (AdamState, GraphError, ParamStore, Rng, Tensor,
                       TrainingDiverged, adam_step, load_checkpoint,
                       save_checkpoint)
from .encoder import (EncoderSpec, GaussianCode, binary_table_spec, encode,
                      encode_np, init_encoder, kl_to_prior, sample)
from .textio import read_flat_config, write_csv, write_flat_config

LN2 = math.log(2.0)


class ObjectiveError(ValueError):
    """Raised for invalid schedules, configs, or loss arguments."""


@dataclass(frozen=True)
class BetaSchedule:
    """Logarithmic anneal beta(t) = start * (end/start)^(t/steps)."""
    beta_start: float
    beta_end: float
    steps: int

    def __post_init__(self):
        if self.beta_start <= 0.0 or self.beta_end <= 0.0:
            raise ObjectiveError("beta endpoints must be positive")
        if self.steps < 1:
            raise ObjectiveError("steps must be a positive integer")

    def value(self, t: int) -> float:
        if t < 0 or t > self.steps:
            raise ObjectiveError(f"step {t} outside [0, {self.steps}]")
        # exact at the endpoints, no pow() rounding
        if t == 0:
            return self.beta_start
        if t == self.steps:
            return self.beta_end
        return self.beta_start * (self.beta_end / self.beta_start) ** (t / self.steps)


@dataclass(frozen=True)
class TrainConfig:
    """Everything a sweep needs; round-trips through a flat config file."""
    n_channels: int
    encoder_kind: str = "binary-table"
    latent_dim: int = 8
    encoder_hidden: tuple[int, ...] = (128, 128)
    decoder_hidden: tuple[int, ...] = (256, 256, 256)
    decoder_activation: str = "lrelu"
    decoder_alpha: float = 0.3
    batch_size: int = 512
    learning_rate: float = 1e-3
    beta_start: float = 5e-4
    beta_end: float = 5.0
    steps: int = 50_000
    n_checkpoints: int = 100
    eval_samples: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.n_channels < 1:
            raise ObjectiveError("need at least one channel")
        for name in ("batch_size", "latent_dim", "n_checkpoints",
                     "eval_samples"):
            if getattr(self, name) < 1:
                raise ObjectiveError(f"{name} must be positive")
        if self.learning_rate <= 0.0:
            raise ObjectiveError("learning_rate must be positive")
        self.schedule()      # validates beta endpoints and steps
        self.encoder_spec()  # validates kind and widths
        self.decoder_layers()

    def schedule(self) -> BetaSchedule:
        return BetaSchedule(self.beta_start, self.beta_end, self.steps)

    def encoder_spec(self) -> EncoderSpec:
        if self.encoder_kind == "binary-table":
            return binary_table_spec(self.latent_dim)
        return EncoderSpec(self.encoder_kind, self.latent_dim,
                           self.encoder_hidden)

    def decoder_layers(self) -> list[dc.Layer]:
        body = [dc.Layer(w, self.decoder_activation, self.decoder_alpha)
                for w in self.decoder_hidden]
        return body + [dc.Layer(1, "identity")]

    def to_mapping(self) -> dict:
        out = {}
        for name in self.__dataclass_fields__:
            v = getattr(self, name)
            if isinstance(v, tuple):
                v = ",".join(str(w) for w in v)
            out[name] = v
        return out

    @classmethod
    def from_mapping(cls, mapping: dict) -> "TrainConfig":
        fields = dict(mapping)
        unknown = set(fields) - set(cls.__dataclass_fields__)
        if unknown:
            raise ObjectiveError(f"unknown config keys {sorted(unknown)}")
        for name in ("encoder_hidden", "decoder_hidden"):
            if name in fields:
                raw = str(fields[name]).strip()
                fields[name] = tuple(int(w) for w in raw.split(",")) if raw else ()
        # accept string values (CLI overrides) for numeric fields
        for name, fdef in cls.__dataclass_fields__.items():
            if name in fields and fdef.type in ("int", "float"):
                caster = int if fdef.type == "int" else float
                fields[name] = caster(fields[name])
        return cls(**fields)


def save_config(path: str | Path, config: TrainConfig) -> None:
    write_flat_config(path, config.to_mapping())


def load_config(path: str | Path) -> TrainConfig:
    return TrainConfig.from_mapping(read_flat_config(path))


@dataclass(frozen=True)
class TrainLogRecord:
    step: int
    beta: float
    channel_kl_nats: tuple[float, ...]
    ce_nats: float
    accuracy: float

    def __post_init__(self):
        if any(k < 0.0 for k in self.channel_kl_nats):
            raise ObjectiveError("channel KL must be nonnegative")
        if self.ce_nats < 0.0:
            raise ObjectiveError("cross-entropy must be nonnegative")


LOG_FIXED_COLUMNS = ["step", "beta", "ce_nats", "accuracy"]


def log_columns(n_channels: int) -> list[str]:
    return LOG_FIXED_COLUMNS + [f"kl{i}_nats" for i in range(n_channels)]


def write_log_csv(path: str | Path, records: list[TrainLogRecord],
                  n_channels: int) -> None:
    rows = [[r.step, r.beta, r.ce_nats, r.accuracy, *r.channel_kl_nats]
            for r in records]
    write_csv(path, log_columns(n_channels), rows)


@dataclass
class DIBModel:
    """Per-channel encoders plus a decoder MLP over concatenated latents.

    Parameter paths are enc/<i>/... for channel i and dec/... for the
    decoder, which is what checkpoints and the measurement pass key on.
    """
    config: TrainConfig
    store: ParamStore

    @classmethod
    def build(cls, config: TrainConfig, rng: Rng) -> "DIBModel":
        store = ParamStore()
        spec = config.encoder_spec()
        for i in range(config.n_channels):
            init_encoder(store, f"enc/{i}", spec, rng)
        dc.init_mlp(store, "dec", config.n_channels * config.latent_dim,
                    config.decoder_layers(), rng)
        return cls(config, store)

    @classmethod
    def from_checkpoint(cls, config: TrainConfig,
                        path: str | Path) -> "DIBModel":
        model = cls.build(config, Rng(config.seed))
        model.store.load_state_dict(load_checkpoint(path))
        return model

    def encode_channels(self, xs: np.ndarray) -> list[GaussianCode]:
        spec = self.config.encoder_spec()
        return [encode(self.store, f"enc/{i}", spec, xs[:, i])
                for i in range(self.config.n_channels)]

    def decode(self, u: Tensor) -> Tensor:
        return dc.mlp_forward(self.store, "dec", u,
                              self.config.decoder_layers())

    def forward(self, xs: np.ndarray,
                rng: Rng) -> tuple[Tensor, list[GaussianCode]]:
        """One sampled pass; returns logits (batch, 1) and the codes."""
        codes = self.encode_channels(xs)
        us = [sample(code, rng) for code in codes]
        return self.decode(dc.concat(us, axis=1)), codes

    def forward_np(self, xs: np.ndarray, rng: Rng | None) -> np.ndarray:
        """Tape-free sampled logits; rng=None decodes the mean latents."""
        spec = self.config.encoder_spec()
        us = []
        for i in range(self.config.n_channels):
            mu, lv = encode_np(self.store, f"enc/{i}", spec, xs[:, i])
            if rng is not None:
                mu = mu + np.exp(0.5 * lv) * rng.standard_normal(mu.shape)
            us.append(mu)
        return dc.mlp_forward_np(self.store, "dec",
                                 np.concatenate(us, axis=1),
                                 self.config.decoder_layers())


def bce_from_logits(logits: Tensor, ys: np.ndarray) -> Tensor:
    """Mean binary cross-entropy in nats; each summand is nonnegative."""
    y = np.asarray(ys, dtype=np.float64).reshape(-1, 1)
    return dc.mean(dc.softplus(logits) - dc.mul(logits, y))


def bce_from_logits_np(logits: np.ndarray, ys: np.ndarray) -> float:
    z = logits.reshape(-1)
    y = np.asarray(ys, dtype=np.float64).reshape(-1)
    per = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    return float(per.mean())


def dib_loss(model: DIBModel, xs: np.ndarray, ys: np.ndarray, beta: float,
             rng: Rng) -> tuple[Tensor, list[Tensor], Tensor]:
    """Assemble beta * sum of mean channel KLs + mean cross-entropy.

    Returns (loss, per-channel mean KL scalars, cross-entropy scalar),
    all in nats, so callers can log the parts without a second pass.
    """
    if beta < 0.0:
        raise ObjectiveError(f"beta must be nonnegative, got {beta}")
    logits, codes = model.forward(xs, rng)
    kls = [dc.mean(kl_to_prior(code)) for code in codes]
    total = kls[0]
    for k in kls[1:]:
        total = total + k
    ce = bce_from_logits(logits, ys)
    return dc.add(dc.mul(total, beta), ce), kls, ce


def label_entropy_bits(ys: np.ndarray) -> float:
    """Empirical H(Y) of a binary label column."""
    p = float(np.asarray(ys, dtype=np.float64).mean())
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return float(-p * np.log2(p) - (1.0 - p) * np.log2(1.0 - p))


def predictive_info_estimate(model: DIBModel, xs: np.ndarray, ys: np.ndarray,
                             rng: Rng, n_samples: int = 8) -> float:
    """H(Y) - CE in bits over the dataset, clamped at 0.

    The cross-entropy is averaged over n_samples latent draws per point,
    so it upper-bounds the CE of the averaged predictive distribution.
    """
    if len(xs) == 0:
        raise ObjectiveError("predictive information of an empty dataset")
    ce = np.mean([bce_from_logits_np(model.forward_np(xs, rng), ys)
                  for _ in range(n_samples)])
    return max(0.0, label_entropy_bits(ys) - float(ce) / LN2)


def accuracy(model: DIBModel, xs: np.ndarray, ys: np.ndarray, rng: Rng,
             n_samples: int = 8, use_mean: bool = False) -> float:
    """Fraction correct, thresholding the mean predicted probability.

    Sampled latents by default; use_mean decodes the code means instead.
    """
    if len(xs) == 0:
        raise ObjectiveError("accuracy of an empty dataset")
    if use_mean:
        probs = expit(model.forward_np(xs, None).reshape(-1))
    else:
        probs = np.mean([expit(model.forward_np(xs, rng).reshape(-1))
                         for _ in range(n_samples)], axis=0)
    return float(np.mean((probs > 0.5) == (np.asarray(ys) > 0.5)))


def checkpoint_steps(steps: int, n_checkpoints: int) -> list[int]:
    """Log-spaced unique steps in [1, steps], always including the last."""
    raw = np.logspace(0.0, math.log10(steps), n_checkpoints) if steps > 1 \
        else np.ones(1)
    picked = sorted(set(int(round(s)) for s in raw) | {steps})
    return [s for s in picked if 1 <= s <= steps]


@dataclass
class TrainResult:
    records: list[TrainLogRecord]
    checkpoint_steps: list[int]
    diverged: bool

    @property
    def last_step(self) -> int:
        return self.checkpoint_steps[-1] if self.checkpoint_steps else 0


def train_sweep(config: TrainConfig, train_set, val_set,
                out_dir: str | Path) -> TrainResult:
    """Run the annealed sweep, writing config.toml, log.csv and ckpt/.

    train_set and val_set are (xs, ys) pairs; only train_set drives the
    gradient steps, val_set is kept for the measurement pass.  On
    divergence the loop aborts, keeping every checkpoint saved so far.
    """
    xs, ys = np.asarray(train_set[0], dtype=np.float64), np.asarray(train_set[1])
    if xs.ndim != 2 or xs.shape[1] != config.n_channels:
        raise ObjectiveError(
            f"expected (n, {config.n_channels}) training features, "
            f"got {xs.shape}")
    if len(xs) == 0:
        raise ObjectiveError("empty training set")

    out = Path(out_dir)
    (out / "ckpt").mkdir(parents=True, exist_ok=True)
    save_config(out / "config.toml", config)

    root = Rng(config.seed)
    model = DIBModel.build(config, root.child(1))
    data_rng, noise_rng = root.child(2), root.child(3)
    adam = AdamState(lr=config.learning_rate)
    sched = config.schedule()
    marks = set(checkpoint_steps(config.steps, config.n_checkpoints))

    records: list[TrainLogRecord] = []
    saved: list[int] = []
    diverged = False
    for t in range(1, config.steps + 1):
        beta = sched.value(t)
        idx = data_rng.integers(0, len(xs), (config.batch_size,))
        try:
            loss, kls, ce = dib_loss(model, xs[idx], ys[idx], beta, noise_rng)
            model.store.zero_grad()
            loss.backward()
            adam_step(model.store, adam)
        except (GraphError, TrainingDiverged):
            # non-finite forward value or gradient: stop, keep what we have
            diverged = True
            break
        if t in marks:
            # mean-latent accuracy: deterministic, no extra noise draws
            batch_acc = accuracy(model, xs[idx], ys[idx], noise_rng,
                                 use_mean=True)
            records.append(TrainLogRecord(
                step=t, beta=beta,
                channel_kl_nats=tuple(k.item() for k in kls),
                ce_nats=ce.item(), accuracy=batch_acc))
            save_checkpoint(out / "ckpt" / f"{t}.dibckpt",
                            model.store.state_dict())
            saved.append(t)
    write_log_csv(out / "log.csv", records, config.n_channels)
    return TrainResult(records, saved, diverged)
