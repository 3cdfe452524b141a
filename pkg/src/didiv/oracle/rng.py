"""Counter-based random streams split into fixed-size unit blocks.

Block b of a run seeded with s always uses Philox keyed by SeedSequence([s, b]),
so generated data do not depend on how many threads produce the blocks.
"""
from __future__ import annotations

import numpy as np

BLOCK = 4096


def stream(seed: int, *path: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, path)])))


def blocks(n: int, block: int = BLOCK):
    """(index, start, stop) for consecutive unit blocks."""
    return [(b, s, min(n, s + block)) for b, s in enumerate(range(0, n, block))]


def unit_ids(n: int) -> np.ndarray:
    width = max(6, len(str(n)))
    return np.array([f"u{i:0{width}d}" for i in range(n)])
