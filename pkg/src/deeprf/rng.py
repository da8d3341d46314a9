"""Counter-based random streams.

Every sampled object in the package draws from a Philox generator keyed by
(seed, stream tag), so results never depend on the order in which layers,
runs or datasets are sampled.
"""

from __future__ import annotations

import zlib

import numpy as np


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & 0xFFFFFFFFFFFFFFFF
    return zlib.crc32(str(tag).encode())


def stream(seed: int, *tags) -> np.random.Generator:
    """Generator for the substream identified by (seed, *tags).

    The key is a pure function of its arguments: the same (seed, tags)
    always yields an identical stream, and distinct tags give statistically
    independent Philox streams.
    """
    mix = 0
    for t in tags:
        mix = (mix * 0x9E3779B97F4A7C15 + _tag_to_int(t) + 1) & 0xFFFFFFFFFFFFFFFF
    key = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF, mix], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
