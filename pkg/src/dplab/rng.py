"""Deterministic pseudo-random generator used everywhere in the package.

The generator contract is fixed so that noise fields, phantoms, and weight
initialisations are bit-reproducible from a 64-bit seed: the seed is expanded
into the 256-bit state with SplitMix64, the stream is xoshiro256++, uniforms
in [0,1) take the top 53 bits of each output word, and normal variates come
from the Box-Muller transform with both variates of each pair consumed in
order.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_INV_2_53 = 1.0 / 9007199254740992.0  # 2^-53


def _splitmix64_stream(seed: int, n: int) -> list[int]:
    """First `n` SplitMix64 outputs for the given 64-bit seed."""
    out = []
    state = seed & _MASK64
    for _ in range(n):
        state = (state + 0x9E3779B97F4A7C15) & _MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        out.append(z ^ (z >> 31))
    return out


class Rng:
    """xoshiro256++ stream seeded via SplitMix64.

    Single-owner: not safe to share across concurrent tasks. Derive
    independent instances per work item instead (e.g. seed + index).
    """

    def __init__(self, seed: int):
        if seed < 0 or seed > _MASK64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.seed = seed
        self._s = _splitmix64_stream(seed, 4)
        self._spare_normal: float | None = None

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        t = (s0 + s3) & _MASK64
        result = (((t << 23) & _MASK64 | (t >> 41)) + s0) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) & _MASK64) | (s3 >> 19)
        self._s = [s0, s1, s2, s3]
        return result

    def uniform(self) -> float:
        """One uniform variate in [0, 1) with 53 bits of resolution."""
        return (self.next_u64() >> 11) * _INV_2_53

    def uniforms(self, n: int) -> np.ndarray:
        """Array of `n` uniform variates, in stream order."""
        # The state update is a sequential recurrence; generate the raw words
        # in a local loop and vectorise only the float conversion.
        s0, s1, s2, s3 = self._s
        words = np.empty(n, dtype=np.uint64)
        for i in range(n):
            t = (s0 + s3) & _MASK64
            words[i] = (((t << 23) & _MASK64 | (t >> 41)) + s0) & _MASK64
            t = (s1 << 17) & _MASK64
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = ((s3 << 45) & _MASK64) | (s3 >> 19)
        self._s = [s0, s1, s2, s3]
        return (words >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def normal(self) -> float:
        """One standard normal variate (same stream as `normals`)."""
        return float(self.normals(1)[0])

    def normals(self, n: int) -> np.ndarray:
        """Array of `n` standard normal variates, in stream order.

        Pairs are produced by Box-Muller from consecutive uniforms; the cosine
        variate of each pair precedes the sine one. A leftover sine variate is
        kept for the next call so the stream has no gaps.
        """
        out = np.empty(n, dtype=np.float64)
        k = 0
        if self._spare_normal is not None and n > 0:
            out[0] = self._spare_normal
            self._spare_normal = None
            k = 1
        pairs = (n - k + 1) // 2
        if pairs:
            u = self.uniforms(2 * pairs)
            r = np.sqrt(-2.0 * np.log(1.0 - u[0::2]))
            theta = (2.0 * np.pi) * u[1::2]
            z = np.empty(2 * pairs, dtype=np.float64)
            z[0::2] = r * np.cos(theta)
            z[1::2] = r * np.sin(theta)
            take = n - k
            out[k:] = z[:take]
            if take < 2 * pairs:
                self._spare_normal = float(z[take])
        return out

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle driven by the uniform stream."""
        for i in range(len(items) - 1, 0, -1):
            j = int(self.uniform() * (i + 1))
            items[i], items[j] = items[j], items[i]
