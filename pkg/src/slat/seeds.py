"""Deterministic RNG substreams.

Every random choice in the package (noise, pixel loss, k-means seeding)
draws from a generator derived from one master seed plus a purpose tag
and an optional counter, so whole experiments replay bit-identically
from a single integer.
"""

from zlib import crc32

import numpy as np


def substream(seed: int, *tags) -> np.random.Generator:
    """Generator for (seed, tags...); string tags are hashed with crc32."""
    entropy = [int(seed) & 0xFFFFFFFF]
    for tag in tags:
        if isinstance(tag, str):
            entropy.append(crc32(tag.encode("utf-8")))
        else:
            entropy.append(int(tag) & 0xFFFFFFFF)
    return np.random.default_rng(entropy)
