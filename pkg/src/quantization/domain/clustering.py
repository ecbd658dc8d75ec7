"""
Feature sampling, AFK-MC2 seeding and Lloyd k-means used to rebuild a codebook.
"""

import logging

import numpy as np
from scipy.spatial.distance import cdist

from src.core.exceptions import DomainError, ValidationError
from src.quantization.domain.codebook import nearest_codes

logger = logging.getLogger(__name__)


def sample_features(dataset: np.ndarray, P: int, rng: np.random.Generator) -> np.ndarray:
    """Draw P feature vectors: an image with replacement, then a grid position.

    ``dataset`` is a stack of feature grids with shape (N, h, w, d).
    """
    dataset = np.asarray(dataset, dtype=np.float64)
    if dataset.ndim != 4 or dataset.shape[0] == 0:
        raise ValidationError(f"feature dataset needs shape (N, h, w, d) with N > 0, got {dataset.shape}")
    if P < 1:
        raise DomainError(f"P must be positive, got {P}")
    n, h, w, _ = dataset.shape
    images = rng.integers(0, n, size=P)
    positions = rng.integers(0, h * w, size=P)
    return dataset[images, positions // w, positions % w]


def squared_distance_to_centers(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return cdist(x, centers, metric="sqeuclidean").min(axis=1)


def afkmc2_seed(features: np.ndarray, K_target: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Approximate k-means++ seeding with Metropolis-Hastings chains of length m.

    The proposal mixes D^2 sampling around the first center with a uniform
    floor: q(x) = 1/2 d^2(x, c1) / sum d^2(., c1) + 1/(2P).
    """
    features = np.asarray(features, dtype=np.float64)
    P = features.shape[0]
    if K_target < 1:
        raise DomainError(f"K_target must be positive, got {K_target}")
    if P < K_target:
        raise DomainError(f"need at least K_target={K_target} features, got {P}")
    if m < 1:
        raise DomainError(f"chain length must be positive, got {m}")

    first = features[rng.integers(0, P)]
    d2_first = squared_distance_to_centers(features, first[None])
    total = d2_first.sum()
    if total == 0.0:
        logger.warning("All sampled features are identical; seeding returns copies of one point")
        return np.repeat(first[None], K_target, axis=0)

    q = 0.5 * d2_first / total + 0.5 / P
    q = q / q.sum()

    centers = [first]
    for _ in range(1, K_target):
        candidates = rng.choice(P, size=m, p=q)
        d2 = squared_distance_to_centers(features[candidates], np.asarray(centers))
        u = rng.random(m)
        x = 0
        for j in range(1, m):
            y = j
            num = d2[y] * q[candidates[x]]
            den = d2[x] * q[candidates[y]]
            if den == 0.0 or num / den > u[j]:
                x = y
        centers.append(features[candidates[x]])
    return np.asarray(centers)


def seeding_potential(features: np.ndarray, centers: np.ndarray) -> float:
    """Sum over features of the squared distance to the nearest center."""
    return float(squared_distance_to_centers(features, centers).sum())


def lloyd_step(features: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """One assignment and mean update; empty clusters move to the worst-served point."""
    K, d = centers.shape
    labels = nearest_codes(features, centers)
    counts = np.bincount(labels, minlength=K)
    sums = np.zeros((K, d), dtype=np.float64)
    np.add.at(sums, labels, features)

    new = centers.copy()
    filled = counts > 0
    new[filled] = sums[filled] / counts[filled, None]

    empty = np.flatnonzero(~filled)
    if empty.size:
        gap = np.sum((features - centers[labels]) ** 2, axis=1)
        order = np.argsort(-gap, kind="stable")
        for k, point in zip(empty, order):
            new[k] = features[point]
        logger.debug(f"Re-seeded {empty.size} empty clusters at farthest points")
    return new


def kmeans(features: np.ndarray, init: np.ndarray, iters: int = 100, tol: float = 1e-6) -> np.ndarray:
    """Lloyd iterations from ``init`` until ``iters`` or center movement below ``tol``."""
    features = np.asarray(features, dtype=np.float64)
    centers = np.asarray(init, dtype=np.float64).copy()
    if centers.ndim != 2 or features.ndim != 2 or centers.shape[1] != features.shape[1]:
        raise ValidationError(f"features {features.shape} and centers {centers.shape} disagree")

    for iteration in range(iters):
        new = lloyd_step(features, centers)
        movement = float(np.max(np.linalg.norm(new - centers, axis=1)))
        centers = new
        if movement < tol:
            logger.debug(f"k-means converged after {iteration + 1} iterations")
            break
    return centers
