# nimbus/seeding.py
"""Seed derivation shared by every stochastic step.

Item seeds come from a splitmix64 finalizer over (base, index) so that any
implementation, thread count or item order reproduces the same streams.
"""

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def mix_seed(base: int, index: int) -> int:
    z = (base + (index + 1) * GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed & MASK64)
