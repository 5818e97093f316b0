"""Radial measurement schemes and data handling for particle neighborhoods.

A neighborhood is a labeled cloud of typed particles around a center at
the origin.  The measurement scheme is a bank of Gaussian-windowed
radial density counts (structure functions), 50 radii per particle
type, which turns each neighborhood into a 100-dimensional feature
vector whose components are the channels of the distributed bottleneck.
Also here: normalization stats, a radial distribution function
diagnostic, a hinge-loss linear baseline, plain-text dataset I/O, and a
synthetic generator with a single informative shell for self-contained
experiments.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diffcore import Rng

N_RADII = 50
R_FIRST, R_LAST = 0.5, 4.0
RADII = np.linspace(R_FIRST, R_LAST, N_RADII)
GRID_SPACING = (R_LAST - R_FIRST) / (N_RADII - 1)
# window width: half the radius grid spacing
DELTA = 0.5 * GRID_SPACING
# particles farther out cannot reach any window; drop them early
TRUNCATION_RADIUS = 4.5

PARTICLE_TYPES = ("A", "B")


class GlassError(ValueError):
    """Raised for malformed neighborhoods, datasets, or degenerate splits."""


@dataclass
class Neighborhood:
    """Typed particle cloud around a center particle at the origin."""
    center_type: str
    positions: np.ndarray  # (m, 2) center-relative
    types: np.ndarray      # (m,) of "A" / "B"
    label: int

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 2)
        self.types = np.asarray(self.types, dtype=object).reshape(-1)
        if self.center_type not in PARTICLE_TYPES:
            raise GlassError(f"unknown center type {self.center_type!r}")
        if len(self.types) != len(self.positions):
            raise GlassError("positions and types disagree in length")
        bad = [t for t in self.types if t not in PARTICLE_TYPES]
        if bad:
            raise GlassError(f"unknown particle type {bad[0]!r}")
        if self.label not in (0, 1):
            raise GlassError(f"label must be 0 or 1, got {self.label!r}")

    @property
    def size(self) -> int:
        return len(self.types)

    def distances(self) -> np.ndarray:
        return np.hypot(self.positions[:, 0], self.positions[:, 1])


def structure_function(nb: Neighborhood, r: float, delta: float,
                       ptype: str) -> float:
    """Gaussian-windowed count of type-ptype neighbors at radius r."""
    if r <= 0.0 or delta <= 0.0:
        raise GlassError("radius and window width must be positive")
    if ptype not in PARTICLE_TYPES:
        raise GlassError(f"unknown particle type {ptype!r}")
    d = nb.distances()[nb.types == ptype]
    return float(np.sum(np.exp(-((d - r) ** 2) / (2.0 * delta ** 2))))


def featurize(nb: Neighborhood) -> np.ndarray:
    """The 100-entry measurement vector: 50 type-A counts then 50 type-B."""
    d = nb.distances()
    keep = d <= TRUNCATION_RADIUS
    d, types = d[keep], nb.types[keep]
    out = np.empty(2 * N_RADII)
    for block, ptype in enumerate(PARTICLE_TYPES):
        dt = d[types == ptype]
        win = np.exp(-((dt[:, None] - RADII[None, :]) ** 2)
                     / (2.0 * DELTA ** 2))
        out[block * N_RADII:(block + 1) * N_RADII] = win.sum(axis=0)
    return out


def featurize_all(nbs: list[Neighborhood]) -> np.ndarray:
    if not nbs:
        raise GlassError("no neighborhoods to featurize")
    return np.stack([featurize(nb) for nb in nbs])


def labels_of(nbs: list[Neighborhood]) -> np.ndarray:
    return np.array([nb.label for nb in nbs], dtype=np.float64)


def feature_labels() -> list[str]:
    """Channel names carrying the physical coordinate, e.g. A_r1.5."""
    return [f"{t}_r{r:.4g}" for t in PARTICLE_TYPES for r in RADII]


@dataclass
class NormStats:
    """Per-feature standardization fitted on the training split.

    Zero-variance features are dropped (with a warning at fit time);
    kept holds the surviving column indices into the raw 100-vector.
    """
    means: np.ndarray
    stds: np.ndarray
    kept: np.ndarray
    labels: list[str] = field(default_factory=feature_labels)

    @classmethod
    def fit(cls, features: np.ndarray) -> "NormStats":
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or len(features) < 2:
            raise GlassError("need at least two rows to fit normalization")
        means = features.mean(axis=0)
        stds = features.std(axis=0)
        kept = np.flatnonzero(stds > 0.0)
        if len(kept) < features.shape[1]:
            warnings.warn(
                f"dropping {features.shape[1] - len(kept)} zero-variance "
                f"feature(s)", stacklevel=2)
        if len(kept) == 0:
            raise GlassError("every feature has zero variance")
        return cls(means[kept], stds[kept], kept)

    def apply(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        return (features[:, self.kept] - self.means) / self.stds

    def kept_labels(self) -> list[str]:
        return [self.labels[i] for i in self.kept]

    def save(self, path: str | Path) -> None:
        payload = {
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
            "kept": self.kept.tolist(),
            "labels": self.labels,
        }
        Path(path).write_text(json.dumps(payload, indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "NormStats":
        raw = json.loads(Path(path).read_text())
        return cls(np.array(raw["means"]), np.array(raw["stds"]),
                   np.array(raw["kept"], dtype=np.int64), list(raw["labels"]))


def compute_rdf(nbs: list[Neighborhood], pair: tuple[str, str] = ("A", "A"),
                bin_width: float = 0.02,
                r_max: float = TRUNCATION_RADIUS) -> tuple[np.ndarray, np.ndarray]:
    """System-averaged g(r) for (center type, neighbor type); diagnostic.

    Normalized by shell area and the mean neighbor density inside the
    r_max disk, so uniform placement gives g ~ 1.
    """
    centers = [nb for nb in nbs if nb.center_type == pair[0]]
    if not centers:
        raise GlassError(f"no neighborhoods with center type {pair[0]!r}")
    dists = []
    for nb in centers:
        d = nb.distances()[nb.types == pair[1]]
        dists.append(d[d <= r_max])
    d = np.concatenate(dists) if dists else np.empty(0)
    edges = np.arange(0.0, r_max + bin_width, bin_width)
    hist, _ = np.histogram(d, bins=edges)
    shell_area = np.pi * (edges[1:] ** 2 - edges[:-1] ** 2)
    density = len(d) / (len(centers) * np.pi * r_max ** 2)
    with np.errstate(invalid="ignore"):
        g = hist / (len(centers) * shell_area * density)
    centers_r = 0.5 * (edges[:-1] + edges[1:])
    return centers_r, g


C_GRID = (0.01, 0.1, 1.0, 10.0, 100.0)


def hinge_svm_train(features: np.ndarray, labels: np.ndarray, lam: float,
                    iters: int = 400, lr: float = 0.1) -> tuple[np.ndarray, float]:
    """Full-batch subgradient descent on mean hinge loss + lam * |w|^2."""
    x = np.asarray(features, dtype=np.float64)
    s = 2.0 * np.asarray(labels, dtype=np.float64) - 1.0
    n, d = x.shape
    w = np.zeros(d)
    b = 0.0
    for _ in range(iters):
        margins = s * (x @ w + b)
        active = margins < 1.0
        gw = -(s[active, None] * x[active]).sum(axis=0) / n + 2.0 * lam * w
        gb = -s[active].sum() / n
        w -= lr * gw
        b -= lr * gb
    return w, b


def linear_baseline(train: tuple[np.ndarray, np.ndarray],
                    val: tuple[np.ndarray, np.ndarray],
                    c_grid: tuple[float, ...] = C_GRID) -> float:
    """Best validation accuracy of a linear hinge classifier over a log
    grid of penalty strengths; features are expected pre-normalized."""
    xt, yt = train
    xv, yv = val
    for name, y in (("training", yt), ("validation", yv)):
        if len(set(np.asarray(y).tolist())) < 2:
            raise GlassError(f"{name} split contains a single class")
    best = 0.0
    for c in c_grid:
        lam = 1.0 / (2.0 * c * len(yt))
        w, b = hinge_svm_train(xt, yt, lam)
        acc = float(np.mean((xv @ w + b > 0.0) == (np.asarray(yv) > 0.5)))
        best = max(best, acc)
    return best


# -- dataset I/O -------------------------------------------------------

def save_dataset(path: str | Path, nbs: list[Neighborhood]) -> None:
    """One record per neighborhood: `N <count> <center_type> <label>`
    header then `<x> <y> <type>` rows; floats use repr for exact
    round-trips."""
    lines = []
    for nb in nbs:
        lines.append(f"N {nb.size} {nb.center_type} {nb.label}")
        for (x, y), t in zip(nb.positions, nb.types):
            lines.append(f"{float(x)!r} {float(y)!r} {t}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path: str | Path) -> list[Neighborhood]:
    lines = Path(path).read_text().splitlines()
    out: list[Neighborhood] = []
    i = 0

    def fail(lineno: int, msg: str):
        raise GlassError(f"{path}:{lineno}: {msg}")

    while i < len(lines):
        line = lines[i].strip()
        if not line:
            i += 1
            continue
        parts = line.split()
        if parts[0] != "N" or len(parts) != 4:
            fail(i + 1, f"expected 'N <count> <center_type> <label>', "
                        f"got {line!r}")
        try:
            count = int(parts[1])
            label = int(parts[3])
        except ValueError:
            fail(i + 1, f"bad record header {line!r}")
        if i + 1 + count > len(lines):
            fail(i + 1, f"record needs {count} particle rows, file ends early")
        pos = np.empty((count, 2))
        types = []
        for j in range(count):
            row = lines[i + 1 + j].strip().split()
            if len(row) != 3:
                fail(i + 2 + j, f"expected '<x> <y> <type>', got "
                                f"{lines[i + 1 + j]!r}")
            try:
                pos[j, 0] = float(row[0])
                pos[j, 1] = float(row[1])
            except ValueError:
                fail(i + 2 + j, f"bad coordinate in {lines[i + 1 + j]!r}")
            if row[2] not in PARTICLE_TYPES:
                fail(i + 2 + j, f"unknown particle type {row[2]!r}")
            types.append(row[2])
        try:
            out.append(Neighborhood(parts[2], pos, np.array(types, dtype=object),
                                    label))
        except GlassError as exc:
            fail(i + 1, str(exc))
        i += 1 + count
    return out


def split_dataset(nbs: list[Neighborhood], seed: int,
                  train_frac: float = 0.9) -> tuple[list[Neighborhood],
                                                    list[Neighborhood]]:
    """Seeded shuffle, then a train_frac / rest split."""
    if not 0.0 < train_frac < 1.0:
        raise GlassError("train_frac must be strictly between 0 and 1")
    if len(nbs) < 2:
        raise GlassError("need at least two records to split")
    order = Rng(seed, stream=101).permutation(len(nbs))
    cut = int(round(train_frac * len(nbs)))
    cut = min(max(cut, 1), len(nbs) - 1)
    return [nbs[i] for i in order[:cut]], [nbs[i] for i in order[cut:]]


# -- synthetic generator ----------------------------------------------

# the informative shell sits exactly on a measurement radius
INFORMATIVE_CHANNEL = 14
INFORMATIVE_RADIUS = float(RADII[INFORMATIVE_CHANNEL])  # 1.5
# background type-A particles stay out of this band so the shell count
# is the only label-dependent signal
_EXCLUDED_BAND = (INFORMATIVE_RADIUS - 0.05, INFORMATIVE_RADIUS + 0.05)
_BG_COUNT = 40
_R_IN, _R_OUT = 0.5, TRUNCATION_RADIUS


def _annulus_points(rng: Rng, count: int, exclude_band: bool) -> np.ndarray:
    """Area-uniform draws from the background annulus."""
    rs = np.empty(count)
    filled = 0
    while filled < count:
        u = rng.uniform((count - filled,))
        r = np.sqrt(u * (_R_OUT ** 2 - _R_IN ** 2) + _R_IN ** 2)
        if exclude_band:
            r = r[(r < _EXCLUDED_BAND[0]) | (r > _EXCLUDED_BAND[1])]
        rs[filled:filled + len(r)] = r
        filled += len(r)
    theta = 2.0 * np.pi * rng.uniform((count,))
    return np.column_stack([rs * np.cos(theta), rs * np.sin(theta)])


def synth_dataset(seed: int, n: int, difficulty: float = 1.0
                  ) -> list[Neighborhood]:
    """Two classes separated only by the count of type-A particles on
    one shell.

    Class 0 places 0-1 particles at the informative radius, class 1 adds
    round(3 * difficulty) more; difficulty 0 makes the classes
    identically distributed.  Everything else is label-independent
    background, so the shell count carries all the signal.
    """
    if n < 2:
        raise GlassError("need n >= 2")
    if difficulty < 0.0:
        raise GlassError("difficulty must be nonnegative")
    rng = Rng(seed, stream=7)
    shift = int(round(3.0 * difficulty))
    out = []
    for i in range(n):
        label = i % 2
        count = int(rng.integers(0, 2, (1,))[0]) + (shift if label else 0)
        r_inf = INFORMATIVE_RADIUS + 0.005 * rng.standard_normal((count,))
        th = 2.0 * np.pi * rng.uniform((count,))
        informative = np.column_stack([r_inf * np.cos(th),
                                       r_inf * np.sin(th)])
        bg_a = _annulus_points(rng, _BG_COUNT, exclude_band=True)
        bg_b = _annulus_points(rng, _BG_COUNT, exclude_band=False)
        positions = np.vstack([informative, bg_a, bg_b])
        types = np.array(["A"] * (count + _BG_COUNT) + ["B"] * _BG_COUNT,
                         dtype=object)
        out.append(Neighborhood("A", positions, types, label))
    return out
