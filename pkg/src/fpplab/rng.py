"""Reproducible random number streams.

Every stochastic routine in the package draws from an :class:`RngStream`,
a thin wrapper around the counter-based Philox generator keyed by
``(seed, replica, tag)``.  Distinct replicas give statistically independent
streams; the same triple reproduces bit-identical draws on the same build.
Normal deviates are produced by a fixed Box-Muller transform so that the
mapping from uniforms to Gaussians never depends on library internals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(x: int) -> int:
    """SplitMix64 finalizer; avalanche-mixes a 64-bit integer."""
    z = (x + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class RngStream:
    """Counter-based stream identified by (seed, replica).

    ``tag`` arguments in the draw methods separate independent uses of the
    same stream (field sampling vs. walk simulation vs. start points, ...).
    """

    seed: int
    replica: int = 0
    algorithm: str = "philox4x64"

    def split(self, replica: int) -> "RngStream":
        return replace(self, replica=replica)

    def _bitgen(self, tag: int) -> np.random.Philox:
        key = [mix64(self.seed ^ mix64(tag)), mix64(self.replica)]
        return np.random.Philox(key=np.array(key, dtype=np.uint64))

    def raw(self, n: int, tag: int = 0) -> np.ndarray:
        """n raw 64-bit words."""
        return self._bitgen(tag).random_raw(n)

    def uniforms(self, n: int, tag: int = 0) -> np.ndarray:
        """n uniforms in (0, 1]; 53-bit resolution, never exactly 0."""
        raw = self.raw(n, tag)
        return ((raw >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53

    def normals(self, n: int, tag: int = 0) -> np.ndarray:
        """n standard normals via Box-Muller on paired uniforms."""
        m = (n + 1) // 2
        u = self.uniforms(2 * m, tag)
        u1, u2 = u[:m], u[m:]
        r = np.sqrt(-2.0 * np.log(u1))
        ang = 2.0 * math.pi * u2
        z = np.concatenate([r * np.cos(ang), r * np.sin(ang)])
        return z[:n]

    def poisson(self, lam: float, tag: int = 0) -> int:
        """One Poisson(lam) draw (inversion for small lam, numpy otherwise)."""
        gen = np.random.Generator(self._bitgen(tag))
        return int(gen.poisson(lam))

    def choice_weighted(self, weights: np.ndarray, n: int, tag: int = 0) -> np.ndarray:
        """n indices drawn proportionally to ``weights`` by inverse CDF."""
        cdf = np.cumsum(np.asarray(weights, dtype=np.float64))
        if cdf[-1] <= 0:
            raise ValueError("weights must have positive total mass")
        u = self.uniforms(n, tag) * cdf[-1]
        return np.searchsorted(cdf, u, side="left").clip(0, len(cdf) - 1)

    def kernel_seed(self, tag: int = 0) -> int:
        """Derive a nonzero 64-bit seed for the in-kernel SplitMix64 stream."""
        s = mix64(mix64(self.seed) ^ mix64(self.replica * 0x100000001B3 + tag))
        return s or 1

    def provenance(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "replica": self.replica,
        }
