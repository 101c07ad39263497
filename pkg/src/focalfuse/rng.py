"""Named, per-purpose random substreams.

Every stochastic choice draws from a PCG64 generator keyed by
``(seed, purpose, *indices)``. Turning one feature on or off therefore never
shifts the numbers another feature sees.
"""

from __future__ import annotations

import zlib

import numpy as np


def _purpose_key(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def substream(seed: int, purpose: str, *index: int) -> np.random.Generator:
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    key = (_purpose_key(purpose),) + tuple(int(i) for i in index)
    ss = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))
