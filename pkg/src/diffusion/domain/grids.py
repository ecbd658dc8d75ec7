"""
Latent code maps and per-position categorical distributions.

Both value objects accept optional leading batch dimensions: a LatentGrid
holds indices of shape (..., h, w) and a ProbGrid holds probabilities of
shape (..., h, w, K). Every operation in the diffusion package is
vectorised over those leading dimensions.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.core.exceptions import DomainError, ValidationError

PROB_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class LatentGrid:
    """A grid of category indices in {0..K-1}."""

    idx: np.ndarray
    K: int

    def __post_init__(self):
        idx = np.asarray(self.idx)
        if idx.ndim < 2:
            raise ValidationError(f"LatentGrid needs at least 2 dimensions, got shape {idx.shape}")
        if idx.shape[-1] * idx.shape[-2] == 0:
            raise ValidationError("LatentGrid must have h * w > 0")
        if self.K < 1:
            raise DomainError(f"K must be positive, got {self.K}")
        if not np.issubdtype(idx.dtype, np.integer):
            raise ValidationError(f"LatentGrid indices must be integers, got {idx.dtype}")
        if idx.size and (idx.min() < 0 or idx.max() >= self.K):
            raise DomainError(f"LatentGrid indices must lie in [0, {self.K})")
        object.__setattr__(self, "idx", idx.astype(np.int64, copy=False))

    @property
    def h(self) -> int:
        return self.idx.shape[-2]

    @property
    def w(self) -> int:
        return self.idx.shape[-1]

    @property
    def batch_shape(self) -> Tuple[int, ...]:
        return self.idx.shape[:-2]

    @property
    def positions(self) -> int:
        """Total number of latent positions across the batch."""
        return int(self.idx.size)

    def one_hot(self) -> np.ndarray:
        return one_hot(self.idx, self.K)

    def __getitem__(self, item) -> "LatentGrid":
        return LatentGrid(self.idx[item], self.K)

    def __len__(self) -> int:
        if not self.batch_shape:
            raise TypeError("unbatched LatentGrid has no length")
        return self.batch_shape[0]

    def equals(self, other: "LatentGrid") -> bool:
        return self.K == other.K and np.array_equal(self.idx, other.idx)


@dataclass(frozen=True, eq=False)
class ProbGrid:
    """A grid of probability vectors over K categories."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        if p.ndim < 3:
            raise ValidationError(f"ProbGrid needs at least 3 dimensions, got shape {p.shape}")
        object.__setattr__(self, "p", p)

    @property
    def K(self) -> int:
        return self.p.shape[-1]

    @property
    def h(self) -> int:
        return self.p.shape[-3]

    @property
    def w(self) -> int:
        return self.p.shape[-2]

    def is_normalized(self, tol: float = PROB_TOLERANCE) -> bool:
        return bool(np.all(self.p >= 0) and np.all(np.abs(self.p.sum(-1) - 1.0) <= tol))

    def check(self, tol: float = PROB_TOLERANCE) -> "ProbGrid":
        """Raise if any vector is negative or does not sum to one."""
        if not self.is_normalized(tol):
            raise ValidationError("ProbGrid vectors must be nonnegative and sum to 1")
        return self

    def __getitem__(self, item) -> "ProbGrid":
        return ProbGrid(self.p[item])


def one_hot(idx: np.ndarray, K: int) -> np.ndarray:
    """One-hot encode an integer array into float64 with a trailing K axis."""
    return np.eye(K, dtype=np.float64)[np.asarray(idx)]


def normalize_last(x):
    """Normalize along the last axis. Works for numpy arrays and torch tensors."""
    return x / x.sum(-1)[..., None]


def sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one index per vector by inverse-CDF sampling."""
    probs = np.asarray(probs, dtype=np.float64)
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[:-1]) * cdf[..., -1]
    idx = (cdf < u[..., None]).sum(-1)
    return np.minimum(idx, probs.shape[-1] - 1).astype(np.int64)


def uniform_grid(shape: Tuple[int, ...], K: int, rng: np.random.Generator) -> LatentGrid:
    """Draw every position independently from the uniform categorical."""
    return LatentGrid(rng.integers(0, K, size=shape, dtype=np.int64), K)
