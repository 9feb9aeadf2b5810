"""Seeding helpers.

All randomness flows through numpy's Philox counter-based generator, keyed by
(seed, stream).  Independent streams keyed from the same seed are statistically
independent and reproducible across platforms and process layouts.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF),
                    np.uint64(stream & 0xFFFFFFFFFFFFFFFF)])
    return np.random.Generator(np.random.Philox(key=key))
