"""
Reverse-process sampling and mask-constrained inpainting.
"""

import logging
from typing import Tuple

import numpy as np

from src.core.exceptions import ValidationError
from src.diffusion.domain.grids import LatentGrid, sample_categorical, uniform_grid
from src.diffusion.domain.interfaces.denoiser_interface import Denoiser
from src.diffusion.domain.schedule import Schedule
from src.diffusion.domain.transitions import reverse_step_dist, sample_q
from src.generation.domain.mask import Mask

logger = logging.getLogger(__name__)


def _reverse_step(denoiser: Denoiser, z_t: LatentGrid, t: int, sched: Schedule, rng: np.random.Generator) -> LatentGrid:
    z0_hat = denoiser.predict_z0(z_t, t)
    probs = reverse_step_dist(z_t, z0_hat, t, sched)
    return LatentGrid(sample_categorical(probs.p, rng), z_t.K)


def sample(
    denoiser: Denoiser,
    sched: Schedule,
    shape: Tuple[int, int, int],
    rng: np.random.Generator,
    count: int = 1,
) -> LatentGrid:
    """Draw ``count`` grids by running the reverse chain from uniform noise.

    Args:
        denoiser: Model or oracle predicting z_0.
        sched: Noise schedule.
        shape: (h, w, K).
        rng: Random stream.
        count: Number of independent grids, sampled as one batch.

    Returns:
        A LatentGrid of shape (count, h, w).
    """
    h, w, K = shape
    if h < 1 or w < 1 or count < 1:
        raise ValidationError(f"invalid sample shape {shape} with count {count}")
    if K != denoiser.K:
        raise ValidationError(f"K={K} does not match the denoiser's K={denoiser.K}")

    z = uniform_grid((count, h, w), K, rng)
    for t in range(sched.T, 0, -1):
        z = _reverse_step(denoiser, z, t, sched, rng)
    logger.debug(f"Sampled {count} grids of {h}x{w} over {sched.T} steps")
    return z


def inpaint(
    denoiser: Denoiser,
    sched: Schedule,
    z0_known: LatentGrid,
    mask: Mask,
    rng: np.random.Generator,
) -> LatentGrid:
    """Fill the m = 0 positions of ``z0_known`` with the reverse process.

    At every step the m = 1 positions carry a fresh forward-diffused copy of
    the known grid at the current noise level, and the m = 0 positions carry
    the reverse-process sample. With an all-zero mask no extra randomness is
    drawn, so the result equals ``sample`` for the same stream.
    """
    mask.check_grid(z0_known.h, z0_known.w)
    if z0_known.K != denoiser.K:
        raise ValidationError(f"K={z0_known.K} does not match the denoiser's K={denoiser.K}")
    conditioned = bool(mask.m.any())

    z = uniform_grid(z0_known.idx.shape, z0_known.K, rng)
    if conditioned:
        z = _merge(z, sample_q(z0_known, sched.T, sched, rng), mask)

    for t in range(sched.T, 0, -1):
        z = _reverse_step(denoiser, z, t, sched, rng)
        if conditioned:
            context = sample_q(z0_known, t - 1, sched, rng) if t > 1 else z0_known
            z = _merge(z, context, mask)
    return z


def _merge(generated: LatentGrid, context: LatentGrid, mask: Mask) -> LatentGrid:
    return LatentGrid(np.where(mask.m, context.idx, generated.idx), generated.K)
