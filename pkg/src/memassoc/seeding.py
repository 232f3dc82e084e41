"""Stage-keyed seed splitting.

Every random stage of an experiment gets its own generator derived from the
global seed and a stage name, so inserting a new stage never shifts the
random streams of the existing ones.
"""

from __future__ import annotations

import zlib

import numpy as np

SEED_MASK = (1 << 64) - 1


def derive_seed(seed: int, *keys: str | int) -> int:
    """Deterministic 64-bit child seed for ``seed`` and a path of keys."""
    words = [int(seed) & 0xFFFFFFFF, (int(seed) >> 32) & 0xFFFFFFFF]
    for key in keys:
        if isinstance(key, str):
            words.append(zlib.crc32(key.encode("utf-8")))
        else:
            words.extend([int(key) & 0xFFFFFFFF, (int(key) >> 32) & 0xFFFFFFFF])
    state = np.random.SeedSequence(words).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def make_rng(seed: int, *keys: str | int) -> np.random.Generator:
    if keys:
        seed = derive_seed(seed, *keys)
    return np.random.default_rng(int(seed) & SEED_MASK)
