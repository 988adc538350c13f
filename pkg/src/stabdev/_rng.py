"""Seeded random streams.

Every random draw in the package comes from a generator keyed by a
``(seed, substream)`` pair.  The pair is turned into a
:class:`numpy.random.SeedSequence` whose ``spawn_key`` is the substream id,
so stream ``j`` of master seed ``s`` is the same no matter which thread or
process asks for it, or in what order.
"""
from __future__ import annotations

import numpy as np

MAX_SEED = 2**64 - 1


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def stream(seed: int, substream: int = 0, *extra: int) -> np.random.Generator:
    """Generator for substream ``substream`` (plus optional nested keys) of ``seed``."""
    key = (int(substream),) + tuple(int(e) for e in extra)
    if any(k < 0 for k in key):
        raise ValueError("substream ids must be nonnegative")
    ss = np.random.SeedSequence(entropy=check_seed(seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))
