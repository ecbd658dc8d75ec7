"""
Denoiser training on the variational bound with importance-sampled timesteps.
"""

import logging
import math
from typing import Callable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from src.core.exceptions import TrainingDivergenceError, ValidationError
from src.denoising.domain.denoiser_model import DenoiserModel
from src.denoising.domain.optimizer import AdamState, adam_step
from src.denoising.domain.timestep_sampler import TimestepSampler
from src.diffusion.domain.grids import LatentGrid
from src.diffusion.domain.schedule import Schedule
from src.diffusion.domain.transitions import sample_q

logger = logging.getLogger(__name__)

DIVERGENCE_GUARD = 1e6


class TrainingConfig(BaseModel):
    steps: int = Field(default=20000, ge=0)
    batch: int = Field(default=128, ge=1)
    lr: float = Field(default=1e-3, gt=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)
    importance_sampling: bool = True


def train_denoiser(
    dataset: LatentGrid,
    model: DenoiserModel,
    sched: Schedule,
    ts: TimestepSampler,
    steps: int,
    batch: int,
    rng: np.random.Generator,
    lr: float = 1e-3,
    on_step: Optional[Callable[[int, float], None]] = None,
) -> Tuple[DenoiserModel, List[float]]:
    """Run Adam on the importance-weighted single-timestep bound estimate.

    Args:
        dataset: Clean latent grids of shape (N, h, w).
        model: Denoiser, updated in place; an Adam state is created if missing.
        sched: Noise schedule.
        ts: Timestep sampler; receives every per-sample loss.
        steps: Number of optimizer steps.
        batch: Grids per step.
        rng: Random stream for grids, timesteps and forward noise.
        lr: Learning rate used when a new Adam state is created.
        on_step: Optional callback receiving (step, bound estimate in bits per position).

    Returns:
        The model and its loss trace in bits per position.
    """
    if dataset.idx.ndim != 3 or len(dataset) == 0:
        raise ValidationError(f"training set needs shape (N, h, w) with N > 0, got {dataset.idx.shape}")
    if (dataset.h, dataset.w, dataset.K) != (model.h, model.w, model.K):
        raise ValidationError("training grids do not match the model's grid shape or K")
    if ts.T != sched.T:
        raise ValidationError(f"timestep sampler T={ts.T} does not match schedule T={sched.T}")
    if model.adam is None:
        model.adam = AdamState.zeros(model.params.size, lr=lr)

    logger.info(f"Training denoiser: steps={steps}, batch={batch}, T={sched.T}, params={model.params.size}")
    trace: List[float] = []
    for step in range(1, steps + 1):
        z0 = dataset[rng.integers(0, len(dataset), size=batch)]
        t = ts.sample(batch, rng)
        z_t = sample_q(z0, t, sched, rng)
        weights = 1.0 / (sched.T * ts.weights()[t - 1])

        value, grad, per_sample = model.loss_and_grad(z0, z_t, t, weights, sched)
        if not math.isfinite(value) or value > DIVERGENCE_GUARD:
            raise TrainingDivergenceError(step=step, loss=value, stage="denoiser training")

        model.params, model.adam = adam_step(model.params, grad, model.adam)
        ts.update(t, per_sample)

        bits = value * sched.T / math.log(2)
        trace.append(bits)
        if on_step:
            on_step(step, bits)
        logger.debug(f"denoiser step {step}: {bits:.6g} bits/position")

    if trace:
        logger.info(f"Finished denoiser training at {trace[-1]:.6g} bits/position")
    return model, trace
