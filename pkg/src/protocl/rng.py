"""Seedable, portable pseudo-random primitives.

Everything that randomness-sensitive contracts depend on (synthetic data,
split shuffling, probe epoch order) runs on the generators in this module,
implemented from their published algorithm descriptions so that another
implementation on another platform can reproduce the streams bit for bit:

* state seeding: splitmix64
* stream: xoshiro256** (Blackman / Vigna)
* unit doubles: top 53 bits of the 64-bit output, ``(x >> 11) * 2**-53``
* normals: Marsaglia polar method, pairs consumed in order with the
  second value cached as a spare that survives across calls
* bounded ints / shuffles: rejection sampling + Fisher-Yates

The Cython kernel implements the same algorithms for bulk generation; the
two paths are required (and tested) to agree exactly.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_UNIT_SCALE = 1.0 / 9007199254740992.0  # 2**-53


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Xoshiro256StarStar:
    """xoshiro256** stream with polar-method normal sampling."""

    __slots__ = ("_s0", "_s1", "_s2", "_s3", "_spare")

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError("seed must be a non-negative 64-bit integer")
        sm = seed & _MASK64
        sm, self._s0 = _splitmix64(sm)
        sm, self._s1 = _splitmix64(sm)
        sm, self._s2 = _splitmix64(sm)
        sm, self._s3 = _splitmix64(sm)
        self._spare: float | None = None

    def next_u64(self) -> int:
        result = (_rotl((self._s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (self._s1 << 17) & _MASK64
        self._s2 ^= self._s0
        self._s3 ^= self._s1
        self._s1 ^= self._s2
        self._s0 ^= self._s3
        self._s2 ^= t
        self._s3 = _rotl(self._s3, 45)
        return result

    def uniform(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * _UNIT_SCALE

    def normal(self) -> float:
        """Standard normal via the polar method; spare carried across calls."""
        if self._spare is not None:
            value, self._spare = self._spare, None
            return value
        while True:
            u1 = 2.0 * self.uniform() - 1.0
            u2 = 2.0 * self.uniform() - 1.0
            s = u1 * u1 + u2 * u2
            if s >= 1.0 or s == 0.0:
                continue
            m = math.sqrt(-2.0 * math.log(s) / s)
            self._spare = u2 * m
            return u1 * m

    def normals(self, n: int) -> np.ndarray:
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            out[i] = self.normal()
        return out

    def below(self, bound: int) -> int:
        """Unbiased integer in [0, bound) by rejection."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % bound

    def permutation(self, n: int) -> list[int]:
        """Fisher-Yates permutation of range(n)."""
        perm = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.below(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm
