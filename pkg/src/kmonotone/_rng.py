"""Seed plumbing: every random stream is addressed by (root seed, key path)."""

import numpy as np


def as_seed_sequence(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def derive_seed(seed, *keys):
    """Child ``SeedSequence`` for ``keys`` below ``seed``.

    Unlike ``SeedSequence.spawn`` this is stateless, so the same keys always
    map to the same stream regardless of call order.
    """
    ss = as_seed_sequence(seed)
    return np.random.SeedSequence(
        entropy=ss.entropy,
        spawn_key=tuple(ss.spawn_key) + tuple(int(k) for k in keys),
        pool_size=ss.pool_size,
    )


def make_rng(seed, *keys):
    if isinstance(seed, np.random.Generator):
        if keys:
            raise TypeError("cannot derive keyed streams from a Generator")
        return seed
    return np.random.default_rng(derive_seed(seed, *keys) if keys else as_seed_sequence(seed))
