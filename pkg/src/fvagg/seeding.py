"""Deterministic RNG derivation.

Every stochastic stage derives its generator from integer keys through a
SeedSequence so independent stages never share a stream and signed 64-bit
seeds are accepted.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_rng(*keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([k & _MASK64 for k in keys]))


def derive_seeds(seed: int, n: int) -> list[int]:
    """n child seeds, stable for a given parent seed."""
    ss = np.random.SeedSequence(seed & _MASK64)
    return [int(s) for s in ss.generate_state(n, dtype=np.uint64)]
