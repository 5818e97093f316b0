"""Deterministic random streams.

All randomness flows through a counter-based Philox generator so a run
is reproducible from its seed alone, with no OS entropy.  Gaussians are
produced by the Box-Muller transform applied to Philox uniforms, which
keeps the normal stream independent of any library-internal ziggurat
tables.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def _mix64(x: int) -> int:
    # splitmix64 finalizer; spreads seed/stream words before keying Philox
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


class Rng:
    """Seeded random source with derivable child streams."""

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        key = (_mix64(self.seed), _mix64(self.stream ^ 0xA5A5A5A5A5A5A5A5))
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def child(self, stream: int) -> "Rng":
        """Independent stream derived from (seed, stream); same seed and
        stream always yield the same sequence."""
        return Rng(self.seed, stream=_mix64(self.stream) ^ _mix64(stream) ^ stream)

    # -- primitives ----------------------------------------------------

    def uniform(self, shape=()) -> np.ndarray:
        """Uniform float64 draws in [0, 1)."""
        return self._gen.random(size=shape, dtype=np.float64)

    def standard_normal(self, shape=()) -> np.ndarray:
        """N(0,1) draws via Box-Muller on uniform pairs."""
        n = int(np.prod(shape)) if shape else 1
        half = (n + 1) // 2
        # 1 - U maps [0,1) to (0,1] so the log is finite
        u1 = 1.0 - self.uniform(half)
        u2 = self.uniform(half)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return z.reshape(shape) if shape else z[0]

    def integers(self, low: int, high: int, shape=()) -> np.ndarray:
        """Uniform integers in [low, high), derived from uniform floats."""
        span = high - low
        if span <= 0:
            raise ValueError(f"empty integer range [{low}, {high})")
        draws = np.floor(self.uniform(shape) * span).astype(np.int64)
        return low + np.minimum(draws, span - 1)

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.uniform(n), kind="stable")

    def choice(self, n: int, size: int, replace: bool = True) -> np.ndarray:
        """Indices into range(n); without replacement needs size <= n."""
        if replace:
            return self.integers(0, n, (size,))
        if size > n:
            raise ValueError(f"cannot draw {size} from {n} without replacement")
        return self.permutation(n)[:size]
