"""Counter-based SplitMix64 random streams.

A stream is identified by a 64-bit key derived from a seed and a path of
labels (``key = little-endian uint64 of BLAKE2b-8("seed/label/...")``).  Its
k-th output (k = 0, 1, ...) is the SplitMix64 finaliser applied to
``key + (k + 1) * 0x9E3779B97F4A7C15 (mod 2**64)``::

    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z =  z ^ (z >> 31)

Uniforms are ``(z >> 11) * 2**-53``.  Because output k depends only on the
key and k, blocks of draws vectorise and any component of a simulation can
be regenerated in isolation.
"""

from __future__ import annotations

import hashlib
import math
from statistics import NormalDist

import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_NEG_53 = 2.0 ** -53


def stream_key(seed: int, *labels) -> int:
    path = "/".join([str(int(seed))] + [str(x) for x in labels])
    return int.from_bytes(hashlib.blake2b(path.encode(), digest_size=8).digest(), "little")


def splitmix64(key: int, start: int, n: int) -> np.ndarray:
    """Outputs ``start .. start+n-1`` of the stream with the given key."""
    k = np.arange(start + 1, start + n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(key) + k * GAMMA
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        z = z ^ (z >> np.uint64(31))
    return z


class Stream:
    """Sequential view over one SplitMix64 stream."""

    def __init__(self, seed: int, *labels):
        self.key = stream_key(seed, *labels)
        self.counter = 0

    def child(self, *labels) -> "Stream":
        s = Stream.__new__(Stream)
        s.key = stream_key(self.key, *labels)
        s.counter = 0
        return s

    def bits(self, n: int) -> np.ndarray:
        out = splitmix64(self.key, self.counter, n)
        self.counter += n
        return out

    def uniform(self, n: int) -> np.ndarray:
        """``n`` floats in [0, 1)."""
        return (self.bits(n) >> np.uint64(11)).astype(np.float64) * _TWO_NEG_53

    def random(self) -> float:
        return float(self.uniform(1)[0])

    def normal(self, n: int, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        """Box-Muller normals; consumes ``2n`` uniforms."""
        u = self.uniform(2 * n)
        u1 = 1.0 - u[:n]  # (0, 1]
        u2 = u[n:]
        return mean + std * np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * math.pi * u2)

    def integers(self, low: int, high: int, n: int) -> np.ndarray:
        """Integers in ``[low, high]`` inclusive."""
        span = high - low + 1
        return low + np.floor(self.uniform(n) * span).astype(np.int64)

    def bernoulli(self, p, n: int) -> np.ndarray:
        return self.uniform(n) < p

    def kumaraswamy(self, a: float, b: float, n: int) -> np.ndarray:
        """Inverse-CDF draws from Kumaraswamy(a, b) on [0, 1]."""
        u = self.uniform(n)
        return (1.0 - (1.0 - u) ** (1.0 / b)) ** (1.0 / a)

    def poisson(self, lam: float) -> int:
        """Single Poisson draw by CDF inversion (one uniform)."""
        u = self.random()
        if lam <= 0:
            return 0
        k, p = 0, math.exp(-lam)
        cdf = p
        while u >= cdf and p > 0:
            k += 1
            p *= lam / k
            cdf += p
        return k

    def truncated_normal(self, mean: float, std: float, low: float, high: float, n: int) -> np.ndarray:
        """Normal(mean, std) restricted to [low, high] by inverse CDF."""
        u = self.uniform(n)
        if std == 0:
            return np.full(n, min(max(mean, low), high), dtype=float)
        dist = NormalDist(mean, std)
        lo, hi = dist.cdf(low), dist.cdf(high)
        out = np.array([dist.inv_cdf(min(max(lo + x * (hi - lo), 1e-300), 1 - 1e-16)) for x in u])
        return np.clip(out, low, high)

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.uniform(n), kind="stable")
