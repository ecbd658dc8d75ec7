"""
Adam on a flat parameter vector.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.core.exceptions import ValidationError

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class AdamState:
    step: int
    m: np.ndarray
    v: np.ndarray
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr: float = 1e-4
    skipped_steps: int = 0

    @classmethod
    def zeros(cls, n: int, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(step=0, m=np.zeros(n), v=np.zeros(n), beta1=beta1, beta2=beta2, eps=eps, lr=lr)

    def to_arrays(self) -> dict:
        return {
            "counters": np.array([self.step, self.skipped_steps], dtype=np.int64),
            "hyper": np.array([self.beta1, self.beta2, self.eps, self.lr], dtype=np.float64),
            "m": self.m,
            "v": self.v,
        }

    @classmethod
    def from_arrays(cls, arrays: dict) -> "AdamState":
        step, skipped = (int(x) for x in arrays["counters"])
        beta1, beta2, eps, lr = (float(x) for x in arrays["hyper"])
        return cls(step, arrays["m"].copy(), arrays["v"].copy(), beta1, beta2, eps, lr, skipped)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState) -> Tuple[np.ndarray, AdamState]:
    """Bias-corrected Adam update; returns new params and the mutated state.

    Non-finite gradients leave params and moments untouched and count a skip.
    """
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ValidationError(f"shape mismatch: params {params.shape}, grads {grads.shape}, state {state.m.shape}")
    if not np.all(np.isfinite(grads)):
        state.skipped_steps += 1
        logger.warning(f"Skipped Adam update at step {state.step + 1}: non-finite gradients")
        return params, state

    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * (grads * grads)
    m_hat = state.m / (1.0 - state.beta1 ** state.step)
    v_hat = state.v / (1.0 - state.beta2 ** state.step)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps), state
