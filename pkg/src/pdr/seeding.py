"""Deterministic seed derivation for per-round, per-client random streams.

Every source of randomness in the simulator is keyed by a 64-bit seed derived
from the master seed and a small set of integer/string tags. Derivation is a
fixed splitmix64-style hash, so streams are reproducible and independent of
evaluation order or parallelism.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def derive_seed(seed: int, *parts: int | str) -> int:
    """Hash a master seed and tag sequence into a new 64-bit seed.

    Tags may be ints (round index, client id, repeat index) or short strings
    naming the consumer ("projection", "noise", ...). The same inputs always
    produce the same output.
    """
    state = _mix64(int(seed) & _MASK)
    for part in parts:
        if isinstance(part, str):
            for byte in part.encode("utf-8"):
                state = _mix64((state + _GAMMA) ^ byte)
        else:
            state = _mix64((state + _GAMMA) ^ (int(part) & _MASK))
    return state


def generator(seed: int, *parts: int | str) -> np.random.Generator:
    """Counter-based numpy generator for the stream named by ``parts``."""
    return np.random.Generator(np.random.Philox(key=derive_seed(seed, *parts)))
