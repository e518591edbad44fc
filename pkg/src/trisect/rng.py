"""Deterministic seeded random source.

SplitMix64 (Steele et al.'s published mixing constants) drives every seeded
procedure in the package: k-means++ restarts, synthetic model generation and
teacher datasets. A self-contained generator keeps per-seed sequences stable
across Python versions and independent of interpreter hash randomization.
"""

from __future__ import annotations

import math

_MASK = (1 << 64) - 1


def mix64(*parts: int) -> int:
    """Fold integers into one well-mixed 64-bit seed (order sensitive)."""
    h = 0x9E3779B97F4A7C15
    for p in parts:
        h = (h ^ (p & _MASK)) * 0xBF58476D1CE4E5B9 & _MASK
        h = (h ^ (h >> 27)) * 0x94D049BB133111EB & _MASK
        h ^= h >> 31
    return h


class Rng:
    """SplitMix64 stream with uniform/normal/index helpers."""

    __slots__ = ("_state", "_spare")

    def __init__(self, seed: int):
        self._state = seed & _MASK
        self._spare: float | None = None

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randrange(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection (no modulo bias)."""
        if n <= 0:
            raise ValueError("randrange bound must be positive")
        limit = _MASK - (_MASK + 1) % n
        while True:
            u = self.next_u64()
            if u <= limit:
                return u % n

    def normal(self) -> float:
        """Standard normal via Box-Muller; caches the paired deviate."""
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        while True:
            u1 = self.random()
            if u1 > 0.0:
                break
        u2 = self.random()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def sample_indices(self, n: int, count: int) -> list[int]:
        """`count` distinct indices from range(n), partial Fisher-Yates order."""
        if count > n:
            raise ValueError("cannot sample more indices than exist")
        pool = list(range(n))
        for i in range(count):
            j = i + self.randrange(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:count]
