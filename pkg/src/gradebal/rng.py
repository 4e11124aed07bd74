"""Deterministic random number generation shared by the whole pipeline.

Two primitives live here and are the only sources of randomness anywhere:

* ``fnv1a64`` / ``derive_seed`` turn (global seed, string id, index) into a
  stable 64-bit stream seed.  The hash is FNV-1a (64-bit): offset basis
  0xcbf29ce484222325, prime 0x100000001b3, folded over the 8 little-endian
  bytes of the global seed, the UTF-8 bytes of the id, and the 8
  little-endian bytes of the index, in that order.
* ``SplitMix64`` is a counter-based generator (Steele et al. 2014 mixing
  constants).  Every draw advances an internal 64-bit counter by the golden
  gamma and hashes it, so the stream depends only on the seed, never on the
  platform or the thread schedule.

Uniform doubles use the top 53 bits of one 64-bit output, giving values in
[0, 1).  Integer draws use a modulo reduction; the bias is below 2**-50 for
the small ranges drawn here.
"""

from __future__ import annotations

_MASK64 = 0xFFFFFFFFFFFFFFFF

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

_GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash of a byte string."""
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def derive_seed(global_seed: int, source_id: str, index: int) -> int:
    """Stable per-item seed from a run seed, a string id, and a counter.

    The result is identical across runs, platforms, and thread schedules,
    which makes every downstream draw replayable from the provenance log.
    Negative inputs are reduced to their unsigned 64-bit representation.
    """
    if index < 0:
        raise ValueError(f"index must be >= 0, got {index}")
    payload = (
        (global_seed & _MASK64).to_bytes(8, "little")
        + source_id.encode("utf-8")
        + (index & _MASK64).to_bytes(8, "little")
    )
    return fnv1a64(payload)


class SplitMix64:
    """Counter-based deterministic generator over a 64-bit state."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN_GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        """Uniform double in [low, high) from the top 53 bits of one draw."""
        u = (self.next_u64() >> 11) * 2.0**-53
        return low + (high - low) * u

    def randint(self, low: int, high: int) -> int:
        """Uniform integer in the inclusive range [low, high]."""
        if high < low:
            raise ValueError(f"empty range [{low}, {high}]")
        return low + self.next_u64() % (high - low + 1)

    def bernoulli(self, p: float) -> bool:
        return self.uniform() < p

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle, one randint per position."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(0, i)
            items[i], items[j] = items[j], items[i]
