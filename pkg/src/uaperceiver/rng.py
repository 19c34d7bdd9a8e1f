"""Deterministic seed derivation and shuffling.

All stochastic choices in the package flow through a splitmix64-style
mixer so that (base_seed, index) pairs reproduce bit-identically across
platforms and runs.
"""

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(base_seed: int, index: int) -> int:
    """Mix a base seed with a stream index into an independent 64-bit seed."""
    return _mix((base_seed & _MASK) + ((index + 1) * _GOLDEN & _MASK))


class SplitMix64:
    """Tiny counter-based generator used for shuffling."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK
        return _mix(self._state)


def shuffled_indices(n: int, seed: int) -> np.ndarray:
    """Fisher-Yates permutation of range(n) driven by a splitmix stream."""
    idx = np.arange(n, dtype=np.int64)
    stream = SplitMix64(seed)
    for i in range(n - 1, 0, -1):
        j = stream.next_u64() % (i + 1)
        idx[i], idx[j] = idx[j], idx[i]
    return idx


def generator(base_seed: int, index: int = 0) -> np.random.Generator:
    """numpy Generator seeded from the derived (base_seed, index) stream."""
    return np.random.default_rng(derive_seed(base_seed, index))
