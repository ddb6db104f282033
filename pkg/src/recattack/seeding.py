"""Deterministic seed derivation.

Per-example (and per-grid-point) seeds are derived from a 64-bit master seed
as ``splitmix64(master XOR index)``.  This mixing function is part of the
external contract: parallel and serial evaluation orders must produce
bit-identical aggregates, so every worker derives its own stream instead of
sharing one.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(state: int) -> int:
    """One output of the SplitMix64 generator seeded at ``state``."""
    z = (state + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def derive_seed(master: int, index: int) -> int:
    """Seed for the ``index``-th independent task under ``master``."""
    return splitmix64((master ^ index) & _MASK)


def rng_for(master: int, index: int) -> np.random.Generator:
    """Fresh generator for the ``index``-th task under ``master``."""
    return np.random.default_rng(derive_seed(master, index))
