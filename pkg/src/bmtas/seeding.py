"""Named deterministic RNG streams.

All randomness in a run flows from one integer seed; independent concerns
(data, warm-up, batches, noise) each get their own stream keyed by tags,
so adding draws to one concern never shifts another.
"""

from __future__ import annotations

from zlib import crc32

import numpy as np


def rng_stream(seed: int, *tags) -> np.random.Generator:
    key = tuple(crc32(str(t).encode()) for t in tags)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))
