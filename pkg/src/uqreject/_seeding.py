"""Stable seed derivation shared by every seeded component."""

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(seed, *keys):
    """Return a 64-bit seed that depends only on ``seed`` and ``keys``.

    Keys are non-negative integers. Different key tuples give statistically
    independent streams, and the result never depends on call order.
    """
    entropy = [int(seed) & _MASK64] + [int(k) & _MASK64 for k in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


def rng_from(seed, *keys):
    return np.random.default_rng(derive_seed(seed, *keys))


def offset_seed(seed, offset):
    """``seed + offset`` wrapped into the unsigned 64-bit range."""
    return (int(seed) + int(offset)) & _MASK64
