"""Mutual-information estimation for frozen Gaussian channels.

Everything here works on plain numpy arrays extracted from trained
models.  The workhorse is a matrix of conditional log densities
L[i, j] = log p(u_i | x_j); a contrastive lower bound and a
leave-one-out upper bound are both row statistics of that matrix, and a
Monte Carlo oracle is available when X has finite support.  All public
results are in bits; internal arithmetic stays in log space (nats).
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .diffcore import Rng
from .textio import write_csv

LN2 = float(np.log(2.0))
_LOG_2PI = float(np.log(2.0 * np.pi))

DEFAULT_K = 1024
DEFAULT_BATCHES = 8


class EstimationError(ValueError):
    """Raised when an estimator's contract is violated."""


@dataclass
class EvalBatch:
    """K paired draws (x_i, code_i, u_i) from one channel."""
    xs: np.ndarray        # (K,) feature values
    mus: np.ndarray       # (K, dim)
    log_vars: np.ndarray  # (K, dim)
    us: np.ndarray        # (K, dim)

    def __post_init__(self):
        k = len(self.xs)
        if k < 1:
            raise EstimationError("an evaluation batch cannot be empty")
        for name in ("mus", "log_vars", "us"):
            arr = getattr(self, name)
            if arr.shape != (k, self.mus.shape[1]):
                raise EstimationError(
                    f"{name} has shape {arr.shape}, expected ({k}, dim)")

    @property
    def size(self) -> int:
        return len(self.xs)


@dataclass
class BoundsResult:
    """Lower/upper bound means and their spread over evaluation batches."""
    lower_bits: float
    upper_bits: float
    lower_std: float
    upper_std: float
    n_batches: int
    batch_size: int

    @property
    def mid_bits(self) -> float:
        return 0.5 * (self.lower_bits + self.upper_bits)

    @property
    def gap_bits(self) -> float:
        return self.upper_bits - self.lower_bits


def log_density_matrix(us: np.ndarray, mus: np.ndarray,
                       log_vars: np.ndarray) -> np.ndarray:
    """L[i, j] = log N(us[i]; mus[j], diag exp(log_vars[j])).

    Expanded as three matrix products so the pairwise quadratic form
    never materializes a (rows, cols, dim) intermediate.
    """
    inv_var = np.exp(-log_vars)
    quad = (us * us) @ inv_var.T
    quad -= 2.0 * (us @ (mus * inv_var).T)
    quad += np.sum(mus * mus * inv_var, axis=1)[None, :]
    norm = -0.5 * (mus.shape[1] * _LOG_2PI + np.sum(log_vars, axis=1))
    return -0.5 * quad + norm[None, :]


def batch_summands(batch: EvalBatch) -> tuple[np.ndarray, np.ndarray]:
    """Per-item lower/upper bound summands in nats.

    lower_i compares p(u_i|x_i) against the mixture over the whole batch
    (own term included, divided by K); upper_i excludes the own term and
    divides by K - 1.
    """
    k = batch.size
    ldm = log_density_matrix(batch.us, batch.mus, batch.log_vars)
    diag = np.diagonal(ldm).copy()
    row_all = logsumexp(ldm, axis=1)
    lower = diag - (row_all - np.log(k))
    if k < 2:
        return lower, np.full(k, np.nan)
    np.fill_diagonal(ldm, -np.inf)
    row_rest = logsumexp(ldm, axis=1)
    upper = diag - (row_rest - np.log(k - 1))
    return lower, upper


def infonce_lower(batches) -> tuple[float, float]:
    """Contrastive lower bound in bits: (mean, std) over batches.

    Each batch's value is capped at log2 K by construction.
    """
    vals = [float(np.mean(batch_summands(b)[0])) / LN2 for b in batches]
    if not vals:
        raise EstimationError("no batches given")
    return float(np.mean(vals)), float(np.std(vals))


def loo_upper(batches) -> tuple[float, float]:
    """Leave-one-out upper bound in bits: (mean, std) over batches."""
    vals = []
    for b in batches:
        if b.size < 2:
            raise EstimationError("the leave-one-out bound needs K >= 2")
        vals.append(float(np.mean(batch_summands(b)[1])) / LN2)
    if not vals:
        raise EstimationError("no batches given")
    return float(np.mean(vals)), float(np.std(vals))


def bounds_from_batches(batches) -> BoundsResult:
    """Both bounds from one pass over shared density matrices."""
    lows, ups, k = [], [], None
    for b in batches:
        if b.size < 2:
            raise EstimationError("bound evaluation needs K >= 2")
        k = b.size if k is None else k
        lo, up = batch_summands(b)
        lows.append(float(np.mean(lo)) / LN2)
        ups.append(float(np.mean(up)) / LN2)
    if not lows:
        raise EstimationError("no batches given")
    return BoundsResult(
        lower_bits=float(np.mean(lows)), upper_bits=float(np.mean(ups)),
        lower_std=float(np.std(lows)), upper_std=float(np.std(ups)),
        n_batches=len(lows), batch_size=k)


# -- channel sources -------------------------------------------------------


@dataclass
class DiscreteChannel:
    """Channel whose input has finite support with known probabilities."""
    values: np.ndarray    # (M,) distinct inputs
    probs: np.ndarray     # (M,) their probabilities
    mus: np.ndarray       # (M, dim)
    log_vars: np.ndarray  # (M, dim)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if not np.isclose(self.probs.sum(), 1.0):
            raise EstimationError("probabilities must sum to 1")

    @property
    def n_outcomes(self) -> int:
        return len(self.values)

    def index_of(self, xs: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.values, xs)
        idx = np.clip(idx, 0, self.n_outcomes - 1)
        if not np.all(self.values[idx] == xs):
            raise EstimationError("probe value outside the channel's support")
        return idx

    def sample_indices(self, rng: Rng, n: int) -> np.ndarray:
        edges = np.cumsum(self.probs)
        return np.searchsorted(edges, rng.uniform((n,)), side="right")

    def batch_from_indices(self, idx: np.ndarray, rng: Rng) -> EvalBatch:
        mus = self.mus[idx]
        lvs = self.log_vars[idx]
        us = mus + np.exp(0.5 * lvs) * rng.standard_normal(mus.shape)
        return EvalBatch(xs=self.values[idx], mus=mus, log_vars=lvs, us=us)

    def sample_batch(self, rng: Rng, k: int) -> EvalBatch:
        return self.batch_from_indices(self.sample_indices(rng, k), rng)


@dataclass
class SampledChannel:
    """Channel represented by an empirical pool of inputs and their codes."""
    pool_xs: np.ndarray        # (N,)
    pool_mus: np.ndarray       # (N, dim)
    pool_log_vars: np.ndarray  # (N, dim)

    def sample_batch(self, rng: Rng, k: int) -> EvalBatch:
        idx = rng.choice(len(self.pool_xs), k, replace=True)
        mus = self.pool_mus[idx]
        lvs = self.pool_log_vars[idx]
        us = mus + np.exp(0.5 * lvs) * rng.standard_normal(mus.shape)
        return EvalBatch(xs=self.pool_xs[idx], mus=mus, log_vars=lvs, us=us)


def discrete_batch_summands(channel: "DiscreteChannel", idx: np.ndarray,
                            us: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Bound summands from K x M densities instead of K x K.

    Batch items sharing an outcome share a density, so the mixture over
    the batch collapses to a count-weighted mixture over the support.
    Identical in exact arithmetic to batch_summands on the expanded
    batch; the leave-one-out term drops one count instead of masking the
    diagonal.
    """
    k = len(idx)
    ldm = log_density_matrix(us, channel.mus, channel.log_vars)
    own = ldm[np.arange(k), idx]
    counts = np.bincount(idx, minlength=channel.n_outcomes).astype(np.float64)
    row_all = logsumexp(ldm, axis=1, b=counts[None, :])
    lower = own - (row_all - np.log(k))
    if k < 2:
        return lower, np.full(k, np.nan)
    rest = np.repeat(counts[None, :], k, axis=0)
    rest[np.arange(k), idx] -= 1.0
    row_rest = logsumexp(ldm, axis=1, b=rest)
    upper = own - (row_rest - np.log(k - 1))
    return lower, upper


def _result_from_bit_means(lows: list[float], ups: list[float],
                           k: int) -> BoundsResult:
    if not lows:
        raise EstimationError("no batches given")
    return BoundsResult(
        lower_bits=float(np.mean(lows)), upper_bits=float(np.mean(ups)),
        lower_std=float(np.std(lows)), upper_std=float(np.std(ups)),
        n_batches=len(lows), batch_size=k)


def _discrete_bounds(channel: "DiscreteChannel", rng: Rng, k: int,
                     n_batches: int,
                     idx_source=None) -> BoundsResult:
    """n_batches rounds of the K x M route; idx_source overrides the
    index draw (the benchmark resamples from a fixed dataset)."""
    if k < 2:
        raise EstimationError("bound evaluation needs K >= 2")
    lows, ups = [], []
    for _ in range(n_batches):
        idx = idx_source() if idx_source else channel.sample_indices(rng, k)
        mus = channel.mus[idx]
        us = mus + (np.exp(0.5 * channel.log_vars[idx])
                    * rng.standard_normal(mus.shape))
        lo, up = discrete_batch_summands(channel, idx, us)
        lows.append(float(np.mean(lo)) / LN2)
        ups.append(float(np.mean(up)) / LN2)
    return _result_from_bit_means(lows, ups, k)


def measure_channel(channel, rng: Rng, k: int = DEFAULT_K,
                    n_batches: int = DEFAULT_BATCHES) -> BoundsResult:
    """Default protocol: both bounds over n_batches fresh K-sized batches.

    Small-support channels take the K x M route; the draw sequence is
    the same either way, only summation grouping differs.
    """
    if isinstance(channel, DiscreteChannel) and channel.n_outcomes < k:
        return _discrete_bounds(channel, rng, k, n_batches)
    return bounds_from_batches(
        channel.sample_batch(rng, k) for _ in range(n_batches))


def mc_oracle(channel: DiscreteChannel, rng: Rng, n_samples: int = 200_000,
              block: int = 20_000) -> tuple[float, float]:
    """Monte Carlo I(X;U) in bits with its standard error.

    Samples (x, u) jointly and averages log p(u|x) - log p(u); the
    marginal is the exact finite mixture, so the only error is Monte
    Carlo.  Requires finite support (a DiscreteChannel).
    """
    if not isinstance(channel, DiscreteChannel):
        raise EstimationError("the MC oracle needs a finite-support channel")
    log_probs = np.log(channel.probs)
    total, total_sq, seen = 0.0, 0.0, 0
    while seen < n_samples:
        nb = min(block, n_samples - seen)
        idx = channel.sample_indices(rng, nb)
        mus = channel.mus[idx]
        lvs = channel.log_vars[idx]
        us = mus + np.exp(0.5 * lvs) * rng.standard_normal(mus.shape)
        ldm = log_density_matrix(us, channel.mus, channel.log_vars)
        log_cond = ldm[np.arange(nb), idx]
        log_marg = logsumexp(ldm + log_probs[None, :], axis=1)
        ratios = (log_cond - log_marg) / LN2
        total += float(ratios.sum())
        total_sq += float((ratios * ratios).sum())
        seen += nb
    mean = total / seen
    var = max(total_sq / seen - mean * mean, 0.0)
    return mean, float(np.sqrt(var / seen))


def per_outcome_contribution(probe_x: float, channel, rng: Rng,
                             k: int = DEFAULT_K,
                             n_batches: int = DEFAULT_BATCHES
                             ) -> tuple[float, float]:
    """Information contribution of a single outcome x, in bits.

    For each batch, a probe draw u ~ p(u|x) is scored against K - 1
    background inputs.  The lower variant includes the probe's own
    density in the mixture (divide by K); the upper variant leaves it
    out (divide by K - 1).  Averaging the lower variant over probes
    drawn from p(x) recovers the full contrastive bound.
    """
    if k < 2:
        raise EstimationError("per-outcome contributions need K >= 2")
    if isinstance(channel, DiscreteChannel):
        pi = channel.index_of(np.asarray([probe_x]))[0]
        probe_mu = channel.mus[pi]
        probe_lv = channel.log_vars[pi]
    else:
        raise EstimationError("per-outcome probes need a finite-support channel")
    lows, ups = [], []
    for _ in range(n_batches):
        bg = channel.sample_batch(rng, k - 1)
        u = probe_mu + np.exp(0.5 * probe_lv) * rng.standard_normal(probe_mu.shape)
        l_own = log_density_matrix(u[None, :], probe_mu[None, :],
                                   probe_lv[None, :])[0, 0]
        l_bg = log_density_matrix(u[None, :], bg.mus, bg.log_vars)[0]
        lows.append(l_own - (logsumexp(np.append(l_bg, l_own)) - np.log(k)))
        ups.append(l_own - (logsumexp(l_bg) - np.log(k - 1)))
    return float(np.mean(lows)) / LN2, float(np.mean(ups)) / LN2


# -- orthogonal-means benchmark --------------------------------------------


@dataclass(frozen=True)
class OrthogonalScheme:
    """2^h_bits equiprobable inputs mapped to means d * e_m in R^dim."""
    h_bits: int
    d: float
    dim: int = 32

    def __post_init__(self):
        if self.dim < 2 ** self.h_bits:
            raise EstimationError(
                f"dim {self.dim} cannot hold {2 ** self.h_bits} orthogonal means")

    @property
    def n_outcomes(self) -> int:
        return 2 ** self.h_bits

    def channel(self) -> DiscreteChannel:
        m = self.n_outcomes
        mus = np.zeros((m, self.dim))
        mus[np.arange(m), np.arange(m)] = self.d
        return DiscreteChannel(
            values=np.arange(m, dtype=np.float64),
            probs=np.full(m, 1.0 / m),
            mus=mus, log_vars=np.zeros((m, self.dim)))


@dataclass
class BenchRow:
    h_bits: int
    d: float
    k: int
    n_batches: int
    lower_bits: float
    lower_std: float
    upper_bits: float
    upper_std: float
    mc_bits: float
    mc_stderr: float


BENCH_COLUMNS = ["H_bits", "d", "K", "B", "lower_bits", "lower_std",
                 "upper_bits", "upper_std", "mc_bits", "mc_stderr"]


def bench_orthogonal(h_list=(1, 2, 4, 6), d_grid=None, k_grid=(64, 256, 1024),
                     n_batches: int = 256, rng: Rng | None = None,
                     n_mc: int = 200_000, dataset_size: int = 1024,
                     dim: int = 32) -> list[BenchRow]:
    """Bound sandwich versus the MC oracle on the orthogonal-means family.

    For each (H, d) a fixed dataset of dataset_size input draws is
    sampled once; evaluation batches are subsets of it (the full dataset
    when K equals its size), re-sampling only the latent draws.
    """
    if rng is None:
        rng = Rng(0)
    if d_grid is None:
        d_grid = (0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0)
    rows: list[BenchRow] = []
    for h in h_list:
        # the space must be wide enough to hold 2^h orthogonal means
        h_dim = max(dim, 2 ** h)
        for d in d_grid:
            channel = OrthogonalScheme(h, d, dim=h_dim).channel()
            # one stream per (H, d) cell, independent of evaluation order
            data_rng = rng.child(h * 1_000_003 + int(round(d * 1e6)))
            dataset = channel.sample_indices(data_rng, dataset_size)
            mc_bits, mc_err = mc_oracle(channel, data_rng.child(1), n_mc)
            for k in k_grid:
                if k > dataset_size:
                    raise EstimationError(
                        f"K={k} exceeds the fixed dataset size {dataset_size}")
                batch_rng = data_rng.child(1000 + k)

                def next_idx(k=k):
                    if k == dataset_size:
                        return dataset
                    return dataset[batch_rng.choice(dataset_size, k,
                                                    replace=False)]

                res = _discrete_bounds(channel, batch_rng, k, n_batches,
                                       idx_source=next_idx)
                rows.append(BenchRow(
                    h_bits=h, d=float(d), k=k, n_batches=n_batches,
                    lower_bits=res.lower_bits, lower_std=res.lower_std,
                    upper_bits=res.upper_bits, upper_std=res.upper_std,
                    mc_bits=mc_bits, mc_stderr=mc_err))
    return rows


def write_bench_csv(rows: list[BenchRow], path: str | Path) -> None:
    write_csv(path, BENCH_COLUMNS,
              [[r.h_bits, r.d, r.k, r.n_batches, r.lower_bits, r.lower_std,
                r.upper_bits, r.upper_std, r.mc_bits, r.mc_stderr]
               for r in rows])
