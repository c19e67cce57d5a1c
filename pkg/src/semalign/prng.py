"""Deterministic random number generation.

Everything random in this package flows through SplitMix64 so that corpora,
parameters and training trajectories are bit-identical across runs and across
implementations that follow the same conventions:

  * state advances by the 64-bit golden-ratio constant 0x9E3779B97F4A7C15,
  * outputs pass through the standard 30/27/31 finalizer,
  * uniform doubles are (x >> 11) * 2**-53, i.e. 53 bits in [0, 1),
  * normals come from Box-Muller with the sine draw cached as the spare,
  * integers below n use next_u64() % n (bias is irrelevant at our ranges
    and the rule is trivially portable).

Sub-streams are obtained with derive_seed, which folds labels into the seed
through the same finalizer, so independent parts of a corpus can be generated
in parallel without sharing generator state.
"""

from __future__ import annotations

import math

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    """SplitMix64 finalizer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def _fnv1a(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & MASK64
    return h


def derive_seed(seed: int, *parts: str | int) -> int:
    """Fold string/int labels into a seed, yielding an independent sub-seed."""
    h = seed & MASK64
    for part in parts:
        if isinstance(part, int):
            v = part & MASK64
        else:
            v = _fnv1a(part.encode("utf-8"))
        h = mix64(h ^ mix64(v))
    return h


class SplitMix64:
    """Sequential generator over the SplitMix64 stream for a given seed."""

    def __init__(self, seed: int):
        self._state = seed & MASK64
        self._spare: float | None = None

    def next_u64(self) -> int:
        self._state = (self._state + GOLDEN) & MASK64
        return mix64(self._state)

    def uniform(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * 2.0**-53

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError("randbelow requires n >= 1")
        return self.next_u64() % n

    def normal(self) -> float:
        """Standard normal via Box-Muller, consuming two uniforms per pair."""
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = self.uniform()
        u2 = self.uniform()
        if u1 == 0.0:
            u1 = 2.0**-53  # log(0) guard; keeps the draw deterministic
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._spare = r * math.sin(theta)
        return r * math.cos(theta)

    def normals(self, n: int) -> list[float]:
        return [self.normal() for _ in range(n)]

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]
