"""Post-hoc assembly of sweep results.

A finished run directory (config.toml, log.csv, ckpt/) is re-measured
checkpoint by checkpoint with the contrastive bounds, then condensed
into the information plane: predictive bits against total transmitted
bits, one point per checkpoint, plus per-channel allocation tracks and
pairwise distinguishability matrices of what each channel still tells
apart.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diffcore import Rng
from .encoder import encode_np
from .miest import (BoundsResult, DiscreteChannel, SampledChannel,
                    measure_channel)
from .objective import (DIBModel, TrainConfig, accuracy, load_config,
                        predictive_info_estimate)
from .textio import read_csv, write_csv


class AnalysisError(ValueError):
    """Raised for incomplete runs or malformed measurement inputs."""


# -- measurement pass --------------------------------------------------

@dataclass(frozen=True)
class MeasureRecord:
    """Raw per-checkpoint measurements, one bounds pair per channel."""
    step: int
    beta: float
    predictive_bits: float
    accuracy: float
    lower_bits: tuple[float, ...]
    upper_bits: tuple[float, ...]


def measure_columns(n_channels: int) -> list[str]:
    cols = ["step", "beta", "predictive_bits", "accuracy"]
    for i in range(n_channels):
        cols += [f"ch{i}_lower_bits", f"ch{i}_upper_bits"]
    return cols


def channel_for_feature(model: DIBModel, i: int, column: np.ndarray):
    """Wrap channel i of a frozen model for the bounds estimator.

    Binary features become an exact two-value channel with empirical
    probabilities; real features become a resampled pool of the column.
    """
    spec = model.config.encoder_spec()
    if spec.kind == "binary-table":
        values = np.array([0.0, 1.0])
        p1 = float(np.mean(column == 1.0))
        mus, lvs = encode_np(model.store, f"enc/{i}", spec, values)
        return DiscreteChannel(values, np.array([1.0 - p1, p1]), mus, lvs)
    mus, lvs = encode_np(model.store, f"enc/{i}", spec, column)
    return SampledChannel(column, mus, lvs)


def measure_checkpoint(model: DIBModel, train_xs: np.ndarray,
                       rng: Rng, k: int = 1024,
                       n_batches: int = 8) -> list[BoundsResult]:
    """Bounds for every channel of a frozen model against the training
    feature columns."""
    out = []
    for i in range(model.config.n_channels):
        channel = channel_for_feature(model, i, train_xs[:, i])
        out.append(measure_channel(channel, rng.child(i + 1), k=k,
                                   n_batches=n_batches))
    return out


def _read_log_steps(run_dir: Path) -> list[tuple[int, float]]:
    log = run_dir / "log.csv"
    if not log.exists():
        raise AnalysisError(f"{run_dir} has no log.csv; run training first")
    header, rows = read_csv(log)
    return [(int(r[0]), float(r[1])) for r in rows]


def measure_run(run_dir: str | Path, train_set, val_set=None,
                k: int = 1024, n_batches: int = 8,
                seed: int = 0) -> list[MeasureRecord]:
    """Measure every checkpoint of a finished run; writes measure.csv.

    train_set feature columns define the channel input distributions;
    val_set (defaults to train_set) is used for predictive bits and
    accuracy.
    """
    run_dir = Path(run_dir)
    if not (run_dir / "config.toml").exists():
        raise AnalysisError(f"{run_dir} has no config.toml; not a run directory")
    config = load_config(run_dir / "config.toml")
    steps = _read_log_steps(run_dir)
    missing = [s for s, _ in steps
               if not (run_dir / "ckpt" / f"{s}.dibckpt").exists()]
    if missing:
        raise AnalysisError(f"missing checkpoint files for steps {missing}")
    xs = np.asarray(train_set[0], dtype=np.float64)
    vxs, vys = val_set if val_set is not None else train_set
    vxs = np.asarray(vxs, dtype=np.float64)
    records = []
    for step, beta in steps:
        model = DIBModel.from_checkpoint(config,
                                         run_dir / "ckpt" / f"{step}.dibckpt")
        rng = Rng(seed).child(step)
        bounds = measure_checkpoint(model, xs, rng, k=k, n_batches=n_batches)
        pred = predictive_info_estimate(model, vxs, np.asarray(vys),
                                        rng.child(1_000_001),
                                        config.eval_samples)
        acc = accuracy(model, vxs, np.asarray(vys), rng.child(1_000_002),
                       config.eval_samples)
        records.append(MeasureRecord(
            step=step, beta=beta, predictive_bits=pred, accuracy=acc,
            lower_bits=tuple(b.lower_bits for b in bounds),
            upper_bits=tuple(b.upper_bits for b in bounds)))
    rows = []
    for r in records:
        row = [r.step, r.beta, r.predictive_bits, r.accuracy]
        for lo, up in zip(r.lower_bits, r.upper_bits):
            row += [lo, up]
        rows.append(row)
    write_csv(run_dir / "measure.csv", measure_columns(config.n_channels),
              rows)
    return records


# -- the information plane ---------------------------------------------

@dataclass(frozen=True)
class InfoPlanePoint:
    """One checkpoint in the information plane.

    per_channel_bits are bound midpoints clamped at zero, so total_bits
    is their exact sum; gap_bits aggregates the (clamped) per-channel
    bound widths.
    """
    step: int
    beta: float
    total_bits: float
    gap_bits: float
    predictive_bits: float
    accuracy: float
    per_channel_bits: tuple[float, ...]

    def __post_init__(self):
        if abs(self.total_bits - sum(self.per_channel_bits)) > 1e-9:
            raise AnalysisError("total_bits must equal the channel sum")
        if self.gap_bits < 0.0:
            raise AnalysisError("gap_bits must be nonnegative")

    @classmethod
    def from_measurement(cls, record: MeasureRecord) -> "InfoPlanePoint":
        per = tuple(max(0.0, 0.5 * (lo + up))
                    for lo, up in zip(record.lower_bits, record.upper_bits))
        gap = sum(max(0.0, up - lo)
                  for lo, up in zip(record.lower_bits, record.upper_bits))
        return cls(step=record.step, beta=record.beta,
                   total_bits=sum(per), gap_bits=gap,
                   predictive_bits=record.predictive_bits,
                   accuracy=record.accuracy, per_channel_bits=per)


def read_measure_csv(run_dir: str | Path) -> list[MeasureRecord]:
    path = Path(run_dir) / "measure.csv"
    if not path.exists():
        raise AnalysisError(
            f"{run_dir} has no measure.csv; run the measurement pass first")
    header, rows = read_csv(path)
    n_channels = (len(header) - 4) // 2
    if measure_columns(n_channels) != header:
        raise AnalysisError(f"unexpected measure.csv columns in {path}")
    out = []
    for r in rows:
        vals = [float(v) for v in r[4:]]
        out.append(MeasureRecord(
            step=int(r[0]), beta=float(r[1]), predictive_bits=float(r[2]),
            accuracy=float(r[3]), lower_bits=tuple(vals[0::2]),
            upper_bits=tuple(vals[1::2])))
    return out


def assemble_plane(run_dir: str | Path) -> list[InfoPlanePoint]:
    """Plane points for a measured run, sorted by total transmitted bits;
    writes plane.csv next to measure.csv."""
    run_dir = Path(run_dir)
    records = read_measure_csv(run_dir)
    points = sorted((InfoPlanePoint.from_measurement(r) for r in records),
                    key=lambda p: p.total_bits)
    if points:
        write_plane_csv(run_dir / "plane.csv", points)
    return points


def plane_columns(n_channels: int) -> list[str]:
    return (["beta", "total_bits", "gap_bits", "predictive_bits", "accuracy"]
            + [f"ch{i}_bits" for i in range(n_channels)])


def write_plane_csv(path: str | Path, points: list[InfoPlanePoint]) -> None:
    n = len(points[0].per_channel_bits)
    rows = [[p.beta, p.total_bits, p.gap_bits, p.predictive_bits, p.accuracy,
             *p.per_channel_bits] for p in points]
    write_csv(path, plane_columns(n), rows)


def channel_allocation(points: list[InfoPlanePoint],
                       labels: list[str] | None = None
                       ) -> tuple[np.ndarray, list[str]]:
    """Heatmap matrix (checkpoints ordered by total_bits x channels)."""
    if not points:
        raise AnalysisError("no plane points to allocate")
    n = len(points[0].per_channel_bits)
    if labels is None:
        labels = [f"ch{i}" for i in range(n)]
    if len(labels) != n:
        raise AnalysisError(f"expected {n} channel labels, got {len(labels)}")
    ordered = sorted(points, key=lambda p: p.total_bits)
    matrix = np.array([p.per_channel_bits for p in ordered])
    return matrix, labels


def write_alloc_csv(path: str | Path, points: list[InfoPlanePoint],
                    labels: list[str] | None = None) -> None:
    matrix, labels = channel_allocation(points, labels)
    ordered = sorted(points, key=lambda p: p.total_bits)
    rows = [[p.beta, p.total_bits, *row]
            for p, row in zip(ordered, matrix)]
    write_csv(path, ["beta", "total_bits"] + [f"{l}_bits" for l in labels],
              rows)


RELEVANT_BITS = 0.1  # inclusive threshold for "carries information"


def top_k_channels(point: InfoPlanePoint, k: int) -> list[int]:
    """Channels at or above the relevance threshold, strongest first."""
    ranked = sorted(range(len(point.per_channel_bits)),
                    key=lambda i: -point.per_channel_bits[i])
    return [i for i in ranked
            if point.per_channel_bits[i] >= RELEVANT_BITS][:k]


# -- distinguishability ------------------------------------------------

@dataclass(frozen=True)
class DistinguishabilityMatrix:
    """Pairwise similarity of a channel's codes over a probe grid.

    1 means the two feature values produce identical codes; near 0 means
    the channel fully separates them.
    """
    probes: np.ndarray
    matrix: np.ndarray

    def __post_init__(self):
        p, m = self.probes, self.matrix
        if m.shape != (len(p), len(p)):
            raise AnalysisError(f"matrix shape {m.shape} does not match "
                                f"{len(p)} probes")


def bhattacharyya_matrix(mus: np.ndarray, log_vars: np.ndarray) -> np.ndarray:
    """Pairwise Bhattacharyya coefficients of diagonal Gaussians.

    Closed form per dimension with vbar = (v_a + v_b) / 2:
    exp(-(mu_a - mu_b)^2 / (8 vbar)) * sqrt(sqrt(v_a v_b) / vbar).
    """
    mus = np.asarray(mus, dtype=np.float64)
    lvs = np.asarray(log_vars, dtype=np.float64)
    va = np.exp(lvs)
    vbar = 0.5 * (va[:, None, :] + va[None, :, :])
    dmu2 = (mus[:, None, :] - mus[None, :, :]) ** 2
    # log-coefficient per dimension, summed; exact 0 on the diagonal
    log_bc = (-dmu2 / (8.0 * vbar)
              + 0.25 * (lvs[:, None, :] + lvs[None, :, :])
              - 0.5 * np.log(vbar))
    out = np.exp(log_bc.sum(axis=2))
    np.fill_diagonal(out, 1.0)
    return out


def wasserstein_similarity_matrix(mus: np.ndarray,
                                  log_vars: np.ndarray) -> np.ndarray:
    """Squashed 2-Wasserstein alternative: exp(-W2^2 / 2)."""
    mus = np.asarray(mus, dtype=np.float64)
    sigma = np.exp(0.5 * np.asarray(log_vars, dtype=np.float64))
    dmu2 = ((mus[:, None, :] - mus[None, :, :]) ** 2).sum(axis=2)
    dsig2 = ((sigma[:, None, :] - sigma[None, :, :]) ** 2).sum(axis=2)
    out = np.exp(-0.5 * (dmu2 + dsig2))
    np.fill_diagonal(out, 1.0)
    return out


_SIMILARITY = {
    "bhattacharyya": bhattacharyya_matrix,
    "wasserstein": wasserstein_similarity_matrix,
}


def probe_grid(values: np.ndarray, n: int = 64) -> np.ndarray:
    """Empirical quantile probes of one feature column."""
    values = np.asarray(values, dtype=np.float64)
    if len(values) == 0:
        raise AnalysisError("cannot build probes from an empty column")
    # nearest-rank so probes are observed values; binary columns stay binary
    return np.quantile(values, np.linspace(0.0, 1.0, n), method="nearest")


def distinguishability(model: DIBModel, channel: int, probes: np.ndarray,
                       measure: str = "bhattacharyya"
                       ) -> DistinguishabilityMatrix:
    """Similarity matrix of one channel's codes over the probe values."""
    if measure not in _SIMILARITY:
        raise AnalysisError(f"unknown similarity measure {measure!r}")
    spec = model.config.encoder_spec()
    mus, lvs = encode_np(model.store, f"enc/{channel}", spec,
                         np.asarray(probes, dtype=np.float64))
    return DistinguishabilityMatrix(np.asarray(probes, dtype=np.float64),
                                    _SIMILARITY[measure](mus, lvs))


def write_disting_csv(path: str | Path, dm: DistinguishabilityMatrix) -> None:
    header = ["probe"] + [format(p, ".12g") for p in dm.probes]
    rows = [[p, *row] for p, row in zip(dm.probes, dm.matrix)]
    write_csv(path, header, rows)
