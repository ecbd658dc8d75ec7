"""
Importance sampling of training timesteps, q(t) proportional to sqrt(E[L_t^2]).
"""

from collections import deque
from typing import Deque, List

import numpy as np

from src.core.exceptions import DomainError

HISTORY_CAPACITY = 10


class TimestepSampler:
    """Tracks recent squared losses per timestep and samples t in 1..T.

    Sampling stays uniform until every timestep holds a full history.
    """

    def __init__(self, T: int, capacity: int = HISTORY_CAPACITY, importance: bool = True):
        if T < 1:
            raise DomainError(f"T must be >= 1, got {T}")
        self.T = T
        self.capacity = capacity
        self.importance = importance
        self.history: List[Deque[float]] = [deque(maxlen=capacity) for _ in range(T)]

    @property
    def warmup_uniform(self) -> bool:
        return any(len(h) < self.capacity for h in self.history)

    def weights(self) -> np.ndarray:
        if not self.importance or self.warmup_uniform:
            return np.full(self.T, 1.0 / self.T)
        w = np.sqrt(np.array([np.mean(h) for h in self.history]))
        if not np.all(np.isfinite(w)) or w.sum() <= 0:
            return np.full(self.T, 1.0 / self.T)
        return w / w.sum()

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw n timesteps in 1..T from the current weights."""
        return rng.choice(self.T, size=n, p=self.weights()) + 1

    def update(self, t: np.ndarray, losses: np.ndarray) -> None:
        for ti, loss in zip(np.asarray(t).ravel(), np.asarray(losses).ravel()):
            self.history[int(ti) - 1].append(float(loss) ** 2)
