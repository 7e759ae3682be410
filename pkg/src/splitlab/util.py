"""Small shared helpers: deterministic RNG stream derivation."""

from __future__ import annotations

import zlib

import numpy as np


def derive_rng(seed: int, *tags) -> np.random.Generator:
    """Independent, reproducible stream for (seed, tags).

    Tags may be strings or ints; strings hash via crc32 so the derivation is
    stable across runs and processes.
    """
    key = tuple(
        t & 0xFFFFFFFF if isinstance(t, int) else zlib.crc32(str(t).encode())
        for t in tags
    )
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))
