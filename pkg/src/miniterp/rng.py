"""Deterministic pseudo-random numbers for corpus generation.

SplitMix64 (Steele, Lea & Flood; the seeding generator of the xoshiro family
and the engine behind Java's SplittableRandom). Chosen because the algorithm
is tiny, published with reference outputs, and therefore bit-reproducible
across platforms and library versions — which the synthetic-corpus contract
requires. Gaussians come from the polar-free Box-Muller transform on top of
the uniform stream.
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# 2**-53: a 53-bit mantissa maps the top bits of a u64 onto [0, 1).
_U53_SCALE = 1.0 / (1 << 53)


class SplitMix64:
    """Seeded 64-bit generator with uniform / normal / integer helpers."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64
        self._spare_normal: float | None = None

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        """Uniform float in [low, high) with 53-bit resolution."""
        u = (self.next_u64() >> 11) * _U53_SCALE
        return low + (high - low) * u

    def randint(self, low: int, high: int) -> int:
        """Uniform integer in [low, high] inclusive (rejection-free modulo
        bias is irrelevant at our range sizes but avoided anyway)."""
        if high < low:
            raise ValueError("empty integer range")
        span = high - low + 1
        # Rejection sampling keeps the stream unbiased and deterministic.
        limit = (_MASK64 + 1) - ((_MASK64 + 1) % span)
        while True:
            u = self.next_u64()
            if u < limit:
                return low + (u % span)

    def normal(self, mean: float = 0.0, sigma: float = 1.0) -> float:
        """Gaussian via Box-Muller; caches the second variate."""
        if self._spare_normal is not None:
            z = self._spare_normal
            self._spare_normal = None
            return mean + sigma * z
        # u1 in (0, 1] so log() is finite.
        u1 = 1.0 - self.uniform()
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._spare_normal = r * math.sin(theta)
        return mean + sigma * r * math.cos(theta)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(0, i)
            items[i], items[j] = items[j], items[i]

    def spawn(self, key: int) -> "SplitMix64":
        """Independent child stream: mix the key through one output step."""
        child_seed = SplitMix64((self._state ^ key) & _MASK64).next_u64()
        return SplitMix64(child_seed)
