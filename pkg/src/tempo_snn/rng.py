"""xoshiro256++ pseudo-random generator.

All experiment draws go through this generator so that a seed names the
same stream in any implementation: the state is filled from the seed with
splitmix64, doubles are the top 53 bits of a 64-bit output scaled by
2**-53.  Reference constants follow the public-domain C sources by
Blackman and Vigna.
"""

from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK


def splitmix64(x: int) -> tuple[int, int]:
    """One splitmix64 step; returns ``(new_state, output)``."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return x, z ^ (z >> 31)


def derive_seed(master: int, index: int) -> int:
    """Independent per-task seed from a master seed and a task index."""
    _, a = splitmix64(master & _MASK)
    _, b = splitmix64((a ^ (index * 0xD1B54A32D192ED03)) & _MASK)
    return b


class Xoshiro256pp:
    def __init__(self, seed: int):
        x = int(seed) & _MASK
        s = []
        for _ in range(4):
            x, out = splitmix64(x)
            s.append(out)
        self._s = s

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s0 + s3) & _MASK, 23) + s0) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        """Uniform double in ``[0, 1)``."""
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def uniform_array(self, low: float, high: float, n: int) -> np.ndarray:
        return np.array([self.uniform(low, high) for _ in range(n)], dtype=np.float64)

    def integers(self, high: int) -> int:
        """Uniform integer in ``[0, high)`` (multiply-shift, tiny bias ignored)."""
        return (self.next_u64() * high) >> 64

    def poisson(self, lam: float) -> int:
        """Poisson draw by sequential inversion; fine for the small rates used here."""
        if lam < 0:
            raise ValueError("rate must be nonnegative")
        if lam == 0.0:
            return 0
        u = self.random()
        k = 0
        p = math.exp(-lam)
        cdf = p
        while u >= cdf and k < 1000:
            k += 1
            p *= lam / k
            cdf += p
        return k

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.integers(i + 1)
            items[i], items[j] = items[j], items[i]
