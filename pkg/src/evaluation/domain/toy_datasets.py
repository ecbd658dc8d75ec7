"""
Synthetic datasets with exactly known generating distributions.
"""

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from src.core.exceptions import ValidationError
from src.diffusion.domain.distribution import MAX_SUPPORT, LatentDistribution

# Per-position (values, probabilities) of the canonical 2x2, K=4 toy.
PATTERN_MARGINALS = [
    ((0, 1), (0.7, 0.3)),
    ((2, 3), (0.6, 0.4)),
    ((1, 3), (0.5, 0.5)),
    ((2,), (1.0,)),
]


def product_distribution(h: int, w: int, K: int, marginals: Sequence) -> LatentDistribution:
    """Distribution whose positions are independent with the given marginals (row-major)."""
    if len(marginals) != h * w:
        raise ValidationError(f"need {h * w} marginals, got {len(marginals)}")
    support, probs = [], []
    for combo in itertools.product(*[list(zip(values, ps)) for values, ps in marginals]):
        support.append([v for v, _ in combo])
        probs.append(math.prod(p for _, p in combo))
    return LatentDistribution(np.array(support).reshape(-1, h, w), np.array(probs), K)


def pattern_distribution(h: int = 2, w: int = 2, K: int = 4, rng: np.random.Generator = None) -> LatentDistribution:
    """The enumerable toy used for oracle checks.

    2x2 with K=4 gives the fixed support-8 distribution. Other sizes draw a
    random product distribution with two values at each of up to 12 positions
    and a fixed value elsewhere.
    """
    if (h, w, K) == (2, 2, 4):
        return product_distribution(h, w, K, PATTERN_MARGINALS)
    if K < 2:
        raise ValidationError(f"K must be >= 2, got {K}")
    if rng is None:
        raise ValidationError("a random stream is required for non-default pattern sizes")
    varying = min(h * w, int(math.log2(MAX_SUPPORT)))
    marginals = []
    for position in range(h * w):
        if position < varying:
            values = tuple(int(v) for v in rng.choice(K, size=2, replace=False))
            p = float(rng.uniform(0.2, 0.8))
            marginals.append((values, (p, 1.0 - p)))
        else:
            marginals.append(((int(rng.integers(0, K)),), (1.0,)))
    return product_distribution(h, w, K, marginals)


def single_grid_distribution(grid: np.ndarray, K: int) -> LatentDistribution:
    return LatentDistribution(np.asarray(grid)[None], np.array([1.0]), K)


@dataclass
class ClusteredImages:
    """Images whose patches are noisy copies of a fixed set of cluster centres."""

    images: np.ndarray
    centres: np.ndarray
    patch: int
    noise: float

    def to_dict(self) -> dict:
        return {
            "kind": "clusters",
            "patch": self.patch,
            "noise": self.noise,
            "centres": self.centres.tolist(),
        }


def clustered_images(
    count: int,
    h: int,
    w: int,
    clusters: int,
    d: int,
    rng: np.random.Generator,
    noise: float = 0.02,
) -> ClusteredImages:
    """Single-channel images of (h * p) x (w * p) pixels, p = sqrt(d).

    Every patch is a centre drawn uniformly from ``clusters`` well-separated
    centres in [0.1, 0.9]^d plus Gaussian noise, clipped to [0, 1].
    """
    patch = math.isqrt(d)
    if patch * patch != d:
        raise ValidationError(f"d must be a perfect square patch size, got {d}")
    if count < 1 or clusters < 1:
        raise ValidationError("count and clusters must be positive")
    centres = rng.uniform(0.1, 0.9, size=(clusters, d))
    labels = rng.integers(0, clusters, size=(count, h, w))
    patches = centres[labels] + rng.normal(0.0, noise, size=(count, h, w, d))
    patches = np.clip(patches, 0.0, 1.0)
    images = patches.reshape(count, h, w, patch, patch).transpose(0, 1, 3, 2, 4).reshape(count, 1, h * patch, w * patch)
    return ClusteredImages(images=images, centres=centres, patch=patch, noise=noise)


def collapsed_codebook(centres: np.ndarray, K: int, live: int, rng: np.random.Generator) -> np.ndarray:
    """A K-entry codebook where only ``live`` entries sit among the data; the rest lie far away."""
    d = centres.shape[1]
    vectors = np.empty((K, d))
    vectors[:live] = centres[rng.choice(centres.shape[0], size=live, replace=False)]
    vectors[live:] = 10.0 + rng.uniform(0.0, 1.0, size=(K - live, d))
    return vectors
