"""Seedable pseudo-random source used everywhere randomness is needed.

The generator is a splitmix-style 64-bit mixer, fixed by its recurrence
constants so that any implementation in any language reproduces the same
stream:

    state   <- (state + 0x9E3779B97F4A7C15) mod 2^64
    z       <- state
    z       <- (z XOR (z >> 30)) * 0xBF58476D1CE4E5B9   mod 2^64
    z       <- (z XOR (z >> 27)) * 0x94D049BB133111EB   mod 2^64
    output  <- z XOR (z >> 31)

Doubles are formed from the top 53 bits: u = (output >> 11) * 2^-53,
giving a uniform sample in [0, 1).
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """Deterministic 64-bit generator; one instance per independent stream."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform_in(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive (floor of a scaled double)."""
        n = hi - lo + 1
        if n <= 0:
            raise ValueError("empty integer range")
        k = int(self.uniform() * n)
        return lo + min(k, n - 1)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(0, i)
            items[i], items[j] = items[j], items[i]

    def derive(self, salt: int) -> "SplitMix64":
        """Independent child stream; deterministic in (state, salt)."""
        child = SplitMix64((self.state ^ (salt * _GAMMA)) & _MASK)
        child.next_u64()
        return child
