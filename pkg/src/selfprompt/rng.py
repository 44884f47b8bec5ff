"""Deterministic random generation used for every experiment-level draw.

All randomness that feeds goldens (box perturbation, fold shuffles, shot
sampling) goes through the SplitMix64 generator below instead of a
platform-dependent library RNG, so recorded values are stable across runs,
platforms, and library versions.

Generator algorithm (documented so goldens are portable):

* State advance: ``state = (state + 0x9E3779B97F4A7C15) mod 2^64``.
* Output mix of the advanced state ``z``::

      z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9;  (mod 2^64)
      z ^= z >> 27;  z *= 0x94D049BB133111EB;  (mod 2^64)
      z ^= z >> 31

* Bounded draw ``randint(n)`` (inclusive upper bound): ``next_u64() % (n + 1)``.
* Shuffle: Fisher-Yates from the last index down, partner drawn with
  ``randint(i)``.
* Seed derivation for sub-streams: FNV-1a (64-bit) over the UTF-8 bytes of
  each token, folded into the base seed with one SplitMix64 output step.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x00000100000001B3


def _mix(z: int) -> int:
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & _MASK64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & _MASK64
    z ^= z >> 31
    return z


class SplitMix64:
    """64-bit SplitMix generator with the exact state advance documented above."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        return _mix(self._state)

    def randint(self, upper_inclusive: int) -> int:
        """Uniform-ish integer in [0, upper_inclusive] via modulo reduction."""
        if upper_inclusive < 0:
            raise ValueError("upper_inclusive must be >= 0")
        return self.next_u64() % (upper_inclusive + 1)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i)
            items[i], items[j] = items[j], items[i]


def fnv1a64(text: str) -> int:
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def derive_seed(base_seed: int, *tokens: str) -> int:
    """Stable sub-stream seed from a base seed and string tokens (e.g. sample ids)."""
    h = base_seed & _MASK64
    for token in tokens:
        h = _mix(h ^ fnv1a64(token))
    return h
