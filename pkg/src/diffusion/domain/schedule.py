"""
Cosine noise schedule for the categorical diffusion chain.

The schedule is computed once in float64 and shared read-only by training,
evaluation and sampling.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, Field

from src.core.exceptions import DomainError

logger = logging.getLogger(__name__)

DEFAULT_T = 4000
DEFAULT_S = 0.008
DEFAULT_BETA_CAP = 0.999


class ScheduleConfig(BaseModel):
    T: int = Field(default=DEFAULT_T, ge=1)
    s: float = Field(default=DEFAULT_S, gt=0.0)
    beta_cap: float = Field(default=DEFAULT_BETA_CAP, gt=0.0, lt=1.0)


def cosine_alpha_bar(t: int, T: int, s: float = DEFAULT_S) -> float:
    """Return the cumulative keep-probability f(t) / f(0) of the cosine schedule.

    f(t) = cos^2(((t / T + s) / (1 + s)) * pi / 2).
    """
    if T < 1:
        raise DomainError(f"T must be >= 1, got {T}")
    if t < 0 or t > T:
        raise DomainError(f"t must lie in [0, {T}], got {t}")
    if s <= 0:
        raise DomainError(f"s must be positive, got {s}")

    def f(u: int) -> float:
        return math.cos(((u / T + s) / (1 + s)) * math.pi / 2) ** 2

    return f(t) / f(0)


@dataclass(frozen=True, eq=False)
class Schedule:
    """Precomputed per-timestep noise parameters.

    ``alpha`` and ``beta`` are stored with length T + 1 so they can be indexed
    directly by t in 1..T; index 0 holds the identity step (alpha=1, beta=0).
    """

    T: int
    s: float
    beta_cap: float
    alpha_bar: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        for name in ("alpha_bar", "alpha", "beta"):
            arr = getattr(self, name)
            if arr.shape != (self.T + 1,):
                raise DomainError(f"{name} must have length T + 1 = {self.T + 1}, got {arr.shape}")
            arr.setflags(write=False)

    def alpha_bar_at(self, t) -> np.ndarray:
        """Vectorised lookup of alpha_bar for integer timesteps."""
        return self.alpha_bar[np.asarray(t)]

    def to_dict(self) -> dict:
        return {"T": self.T, "s": self.s, "beta_cap": self.beta_cap}


def build_schedule(T: int = DEFAULT_T, s: float = DEFAULT_S, beta_cap: float = DEFAULT_BETA_CAP) -> Schedule:
    """Build the schedule, clipping beta at ``beta_cap``.

    alpha and alpha_bar are re-derived from the clipped betas so the product
    identity prod_{u<=t} alpha[u] == alpha_bar[t] holds by construction.
    """
    if T < 1:
        raise DomainError(f"T must be >= 1, got {T}")
    if not 0 < beta_cap < 1:
        raise DomainError(f"beta_cap must lie in (0, 1), got {beta_cap}")
    if s <= 0:
        raise DomainError(f"s must be positive, got {s}")

    raw = np.array([cosine_alpha_bar(t, T, s) for t in range(T + 1)], dtype=np.float64)

    beta = np.zeros(T + 1, dtype=np.float64)
    beta[1:] = 1.0 - raw[1:] / raw[:-1]
    clipped = int(np.count_nonzero(beta[1:] > beta_cap))
    beta[1:] = np.minimum(beta[1:], beta_cap)

    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    alpha_bar[0] = 1.0

    if clipped:
        logger.debug(f"Clipped {clipped} of {T} betas at {beta_cap}")

    return Schedule(T=T, s=s, beta_cap=beta_cap, alpha_bar=alpha_bar, alpha=alpha, beta=beta)
