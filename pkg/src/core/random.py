"""
Random-stream helpers.

All stochastic operations take an explicit ``numpy.random.Generator``; nothing
in the package draws from global state.
"""

from typing import List

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    """Create a PCG64 generator for a non-negative integer seed."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return np.random.default_rng(np.random.SeedSequence(seed))


def spawn_streams(seed: int, n: int) -> List[np.random.Generator]:
    """Derive ``n`` statistically independent child streams from one seed.

    Used when independent trajectories run on disjoint random streams.
    """
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.default_rng(child) for child in children]
