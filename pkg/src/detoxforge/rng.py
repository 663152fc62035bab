"""Deterministic 64-bit PRNG used for every seeded operation in the package.

The generator is SplitMix64 (Steele/Lea/Vigna), chosen because its whole
state is one u64 and its constants are published, so any other
implementation can reproduce our sample streams bit-for-bit:

    state   += 0x9E3779B97F4A7C15          (golden-ratio increment)
    z        = state
    z       ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
    z       ^= z >> 27;  z *= 0x94D049BB133111EB
    z       ^= z >> 31
    output   = z

Derived draws consume the raw stream in a fixed, documented way:

* ``below(n)`` — unbiased bounded integer in [0, n) by rejection: draw u64,
  reject values >= floor(2^64 / n) * n, otherwise return draw % n.
* ``shuffle(xs)`` — in-place Fisher-Yates from the back: for i = len-1 .. 1,
  j = below(i + 1), swap xs[i] and xs[j].

Consumers must document the order in which they call these; the order is
part of the reproducibility contract.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 stream seeded with an unsigned 64-bit integer."""

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError("seed must be a non-negative integer")
        self._state = seed & MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return (z ^ (z >> 31)) & MASK64

    def below(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def shuffle(self, xs: list) -> None:
        """In-place Fisher-Yates shuffle, iterating from the last index down."""
        for i in range(len(xs) - 1, 0, -1):
            j = self.below(i + 1)
            xs[i], xs[j] = xs[j], xs[i]

    def sample_without_replacement(self, xs: list, k: int) -> list:
        """Uniform k-subset: full Fisher-Yates shuffle of a copy, take first k."""
        if k < 0:
            raise ValueError("k must be non-negative")
        picked = list(xs)
        self.shuffle(picked)
        return picked[:k]
