"""Deterministic random number generation.

Every stochastic choice in the package (weight init, task sampling, shuffling,
relabeling) flows through `Rng`, a SplitMix64 generator. The algorithm is
fixed and implemented here in full so that a seed reproduces the exact same
draw sequence on every platform and Python version, independent of numpy's
generator choices.

SplitMix64 (Steele, Lea, Flood 2014; public-domain reference by S. Vigna):
    state = (state + 0x9E3779B97F4A7C15) mod 2^64
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 mod 2^64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB mod 2^64
    output = z ^ (z >> 31)
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


class Rng:
    """SplitMix64 stream with convenience draws used by the package."""

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        self._state = self.seed

    def next_u64(self) -> int:
        """Advance the stream and return the next 64-bit output."""
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        """Uniform float in [low, high) with 53 bits of precision."""
        u = self.next_u64() >> 11  # top 53 bits
        return low + (high - low) * (u * (1.0 / (1 << 53)))

    def uniform_array(self, shape, low: float = -1.0, high: float = 1.0) -> np.ndarray:
        n = 1
        for d in shape:
            n *= d
        vals = [self.uniform(low, high) for _ in range(n)]
        return np.array(vals, dtype=np.float64).reshape(shape)

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n) via rejection sampling (no modulo bias)."""
        if n <= 0:
            raise ValueError("randint bound must be positive")
        limit = _MASK64 + 1 - ((_MASK64 + 1) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def choice(self, seq):
        return seq[self.randint(len(seq))]

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def spawn(self, key: int) -> "Rng":
        """Derive an independent child stream from (seed, key)."""
        mixer = Rng((self.seed ^ (key * _GAMMA)) & _MASK64)
        return Rng(mixer.next_u64())
