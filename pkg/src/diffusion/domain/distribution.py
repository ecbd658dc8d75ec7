"""
Explicit distributions over whole latent grids, used as oracles on toys.
"""

from dataclasses import dataclass
from typing import Dict, Iterable, List, Tuple

import numpy as np

from src.core.exceptions import ValidationError
from src.diffusion.domain.grids import LatentGrid

MAX_SUPPORT = 4096


@dataclass(frozen=True, eq=False)
class LatentDistribution:
    """A finite support of grids with their probabilities.

    ``support`` has shape (S, h, w); ``probs`` has shape (S,) and sums to 1.
    """

    support: np.ndarray
    probs: np.ndarray
    K: int

    def __post_init__(self):
        support = np.asarray(self.support, dtype=np.int64)
        probs = np.asarray(self.probs, dtype=np.float64)
        if support.ndim != 3:
            raise ValidationError(f"support must have shape (S, h, w), got {support.shape}")
        if probs.shape != (support.shape[0],):
            raise ValidationError("probs must have one entry per support grid")
        if support.shape[0] == 0 or support.shape[0] > MAX_SUPPORT:
            raise ValidationError(f"support size must lie in [1, {MAX_SUPPORT}]")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise ValidationError("probs must be nonnegative and sum to 1")
        if support.min() < 0 or support.max() >= self.K:
            raise ValidationError(f"support indices must lie in [0, {self.K})")
        flat = support.reshape(support.shape[0], -1)
        if np.unique(flat, axis=0).shape[0] != flat.shape[0]:
            raise ValidationError("support grids must be distinct")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[LatentGrid, float]]) -> "LatentDistribution":
        pairs = list(pairs)
        if not pairs:
            raise ValidationError("distribution needs at least one grid")
        K = pairs[0][0].K
        return cls(
            support=np.stack([grid.idx for grid, _ in pairs]),
            probs=np.array([p for _, p in pairs], dtype=np.float64),
            K=K,
        )

    @property
    def h(self) -> int:
        return self.support.shape[1]

    @property
    def w(self) -> int:
        return self.support.shape[2]

    def pairs(self) -> List[Tuple[LatentGrid, float]]:
        return [(LatentGrid(g, self.K), float(p)) for g, p in zip(self.support, self.probs)]

    def keys(self) -> List[bytes]:
        """Stable byte keys, one per support grid, for histogram matching."""
        return [grid_key(g) for g in self.support]

    def as_dict(self) -> Dict[bytes, float]:
        return dict(zip(self.keys(), self.probs.tolist()))

    def sample(self, n: int, rng: np.random.Generator) -> LatentGrid:
        choice = rng.choice(self.support.shape[0], size=n, p=self.probs)
        return LatentGrid(self.support[choice], self.K)

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "h": self.h,
            "w": self.w,
            "support": self.support.tolist(),
            "probs": self.probs.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LatentDistribution":
        return cls(support=np.array(data["support"]), probs=np.array(data["probs"]), K=int(data["K"]))


def grid_key(grid: np.ndarray) -> bytes:
    return np.ascontiguousarray(grid, dtype="<i8").tobytes()
