"""
Vector-quantization codebook.

Feature grids are plain float64 arrays of shape (..., h, w, d); quantization
maps every d-vector to the index of its nearest code vector.
"""

import logging
from dataclasses import dataclass, field
from typing import Iterable, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from src.core.exceptions import DomainError, ValidationError
from src.diffusion.domain.grids import LatentGrid

logger = logging.getLogger(__name__)


def check_features(features: np.ndarray, d: int) -> np.ndarray:
    """Validate a feature grid of shape (..., h, w, d)."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim < 3:
        raise ValidationError(f"feature grid needs shape (..., h, w, d), got {features.shape}")
    if features.shape[-1] != d:
        raise ValidationError(f"feature dimension {features.shape[-1]} does not match codebook d={d}")
    if not np.all(np.isfinite(features)):
        raise ValidationError("feature grid contains non-finite entries")
    return features


def nearest_codes(vectors: np.ndarray, codes: np.ndarray) -> np.ndarray:
    """Index of the squared-L2 nearest code for each row; ties go to the lowest index."""
    return np.argmin(cdist(vectors, codes, metric="sqeuclidean"), axis=1)


@dataclass(eq=False)
class Codebook:
    """K code vectors of dimension d plus per-code hit counts."""

    vectors: np.ndarray
    hit_counts: np.ndarray = field(default=None)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[0] == 0:
            raise DomainError(f"codebook needs shape (K, d) with K > 0, got {self.vectors.shape}")
        if self.hit_counts is None:
            self.hit_counts = np.zeros(self.K, dtype=np.int64)
        self.hit_counts = np.asarray(self.hit_counts, dtype=np.int64)
        if self.hit_counts.shape != (self.K,):
            raise ValidationError(f"hit_counts must have length K={self.K}")

    @property
    def K(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    @classmethod
    def uniform_init(cls, K: int, d: int, rng: np.random.Generator) -> "Codebook":
        """Codes drawn from U(-1/K, 1/K), the usual VQ initialization."""
        if K < 1 or d < 1:
            raise DomainError(f"codebook needs K >= 1 and d >= 1, got K={K}, d={d}")
        return cls(rng.uniform(-1.0 / K, 1.0 / K, size=(K, d)))

    def quantize(self, features: np.ndarray) -> Tuple[LatentGrid, np.ndarray]:
        """Map a feature grid to code indices and quantized vectors; counts the hits."""
        idx, z_q = self.lookup_nearest(features)
        self.hit_counts += np.bincount(idx.idx.ravel(), minlength=self.K)
        return idx, z_q

    def lookup_nearest(self, features: np.ndarray) -> Tuple[LatentGrid, np.ndarray]:
        """Same as quantize, without touching hit counts."""
        features = check_features(features, self.d)
        flat = features.reshape(-1, self.d)
        idx = nearest_codes(flat, self.vectors).reshape(features.shape[:-1])
        return LatentGrid(idx, self.K), self.vectors[idx]

    def lookup(self, grid: LatentGrid) -> np.ndarray:
        if grid.K != self.K:
            raise ValidationError(f"grid K={grid.K} does not match codebook K={self.K}")
        return self.vectors[grid.idx]

    def reset_hits(self) -> None:
        self.hit_counts = np.zeros(self.K, dtype=np.int64)

    def check_duplicates(self) -> int:
        """Count code vectors that are bit-identical to an earlier one; warns when any are."""
        duplicates = self.K - np.unique(self.vectors, axis=0).shape[0]
        if duplicates:
            logger.warning(f"Codebook holds {duplicates} duplicate code vectors")
        return int(duplicates)

    def copy(self) -> "Codebook":
        return Codebook(self.vectors.copy(), self.hit_counts.copy())

    def to_arrays(self) -> dict:
        return {"vectors": self.vectors, "hit_counts": self.hit_counts}

    @classmethod
    def from_arrays(cls, arrays: dict) -> "Codebook":
        return cls(arrays["vectors"], arrays["hit_counts"])


def quantize(features: np.ndarray, cb: Codebook) -> Tuple[LatentGrid, np.ndarray]:
    return cb.quantize(features)


def usage(index_stream: Iterable[LatentGrid], K: int) -> float:
    """Fraction of the K codes that appear at least once in the stream."""
    seen = np.zeros(K, dtype=bool)
    for grid in index_stream:
        if grid.idx.size and grid.idx.max() >= K:
            raise DomainError(f"index stream holds indices >= K={K}")
        seen[np.unique(grid.idx)] = True
    return float(seen.sum()) / K


def quantization_mse(features: np.ndarray, cb: Codebook) -> float:
    """Mean squared distance between features and their nearest codes, per vector."""
    features = check_features(features, cb.d)
    _, z_q = cb.lookup_nearest(features)
    return float(np.mean(np.sum((features - z_q) ** 2, axis=-1)))
