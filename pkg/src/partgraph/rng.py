"""Seeded pseudo-random numbers with a fixed, documented algorithm.

Scene generation and weight initialization must be reproducible bit for bit,
independent of the host platform and of any library's RNG internals. The
generator here is xorshift64* (Vigna 2016): a 64-bit xorshift step followed
by a multiplicative scramble,

    s ^= s >> 12;  s ^= s << 25;  s ^= s >> 27;  output = s * 2685821657736338717

with all arithmetic modulo 2**64. Uniform doubles take the top 53 output
bits: u = (output >> 11) * 2**-53, so u is in [0, 1).

A seed of 0 (the one forbidden xorshift state) is remapped to the constant
0x9E3779B97F4A7C15.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_MULT = 2685821657736338717
_ZERO_SEED = 0x9E3779B97F4A7C15


class Xorshift64Star:
    """xorshift64* stream. Deterministic for a given seed."""

    def __init__(self, seed: int):
        self._state = (seed & _MASK) or _ZERO_SEED

    def next_u64(self) -> int:
        s = self._state
        s ^= s >> 12
        s ^= (s << 25) & _MASK
        s ^= s >> 27
        self._state = s
        return (s * _MULT) & _MASK

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        """Uniform double in [lo, hi)."""
        u = (self.next_u64() >> 11) * 2.0**-53
        return lo + (hi - lo) * u

    def randint(self, n: int) -> int:
        """Integer in [0, n). Derived from the uniform double; n must be small."""
        if n <= 0:
            raise ValueError("randint needs a positive bound")
        k = int(self.uniform() * n)
        return min(k, n - 1)
