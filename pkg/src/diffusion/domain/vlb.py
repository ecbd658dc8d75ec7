"""
Variational lower bound of the categorical chain.

    L = KL(q(z_T | z_0) || uniform) + sum_{t=2..T} KL(q(z_{t-1} | z_t, z_0) || p(z_{t-1} | z_t))
        - log p(z_0 | z_1)

reported in nats per term and in bits per latent position overall.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from src.core.exceptions import DomainError
from src.diffusion.domain.grids import LatentGrid
from src.diffusion.domain.interfaces.denoiser_interface import Denoiser
from src.diffusion.domain.schedule import Schedule
from src.diffusion.domain.transitions import PROB_FLOOR, categorical_kl, posterior_probs, sample_q

logger = logging.getLogger(__name__)

EXACT_CHUNK = 256


class VlbMode(str, Enum):
    EXACT = "exact"
    SAMPLED = "sampled"


@dataclass(frozen=True, eq=False)
class VlbTerms:
    """Bound components in nats; ``step_kls[i]`` belongs to t = i + 2."""

    prior_kl: float
    step_kls: np.ndarray
    decoder_nll: float
    positions: int

    @property
    def total_nats(self) -> float:
        return math.fsum([self.prior_kl, self.decoder_nll, *self.step_kls.tolist()])

    @property
    def total_bits_per_pos(self) -> float:
        return self.total_nats / (self.positions * math.log(2))


def prior_kl(z0: LatentGrid, alpha_bar_T: float) -> float:
    """Closed-form sum over positions of KL(q(z_T | z_0) || uniform)."""
    K = z0.K
    hit = alpha_bar_T + (1.0 - alpha_bar_T) / K
    miss = (1.0 - alpha_bar_T) / K
    per_position = hit * math.log(hit * K)
    if miss > 0:
        per_position += (K - 1) * miss * math.log(miss * K)
    return max(per_position, 0.0) * z0.positions


def term_losses(
    z0_idx: np.ndarray,
    zt_idx: np.ndarray,
    t: np.ndarray,
    z0_hat: np.ndarray,
    sched: Schedule,
) -> np.ndarray:
    """Per-grid loss term L_t in nats for a batch with one timestep per grid.

    L_1 is the decoder negative log-likelihood, L_t for t >= 2 the step KL.
    """
    K = z0_hat.shape[-1]
    sum_axes = tuple(range(1, z0_idx.ndim))

    picked = np.take_along_axis(z0_hat, z0_idx[..., None], axis=-1)[..., 0]
    nll = -np.log(np.maximum(picked, PROB_FLOOR)).sum(axis=sum_axes)

    t_safe = np.maximum(t, 1)
    true = posterior_probs(zt_idx, np.eye(K)[z0_idx], t_safe, sched)
    model = posterior_probs(zt_idx, z0_hat, t_safe, sched)
    kl, clamped = categorical_kl(true, model)
    if clamped:
        logger.warning(f"Clamped model probabilities at {PROB_FLOOR} in the bound")
    kl = kl.sum(axis=sum_axes)

    return np.where(t == 1, nll, kl)


def vlb(
    z0: LatentGrid,
    denoiser: Denoiser,
    sched: Schedule,
    rng: np.random.Generator,
    mode: VlbMode = VlbMode.EXACT,
    timestep_probs: Optional[np.ndarray] = None,
) -> VlbTerms:
    """Evaluate the bound for one grid (or the sum over a batch of grids).

    Exact mode draws one z_t per timestep and evaluates every term. Sampled
    mode draws a single t from ``timestep_probs`` (uniform when omitted) and
    returns the importance-reweighted, unbiased single-term estimate.
    """
    mode = VlbMode(mode)
    grids = z0.idx.reshape((-1, z0.h, z0.w))
    prior = prior_kl(z0, float(sched.alpha_bar[sched.T]))
    step_kls = np.zeros(max(sched.T - 1, 0), dtype=np.float64)
    decoder = 0.0

    if mode is VlbMode.EXACT:
        for grid in grids:
            losses = _exact_terms(grid, z0.K, denoiser, sched, rng)
            decoder += float(losses[0])
            step_kls += losses[1:]
    else:
        probs = _timestep_probs(sched, timestep_probs)
        for grid in grids:
            t = int(rng.choice(sched.T, p=probs)) + 1
            loss = _terms_for(grid[None], np.array([t]), z0.K, denoiser, sched, rng)[0]
            weighted = loss / probs[t - 1]
            if t == 1:
                decoder += float(weighted)
            else:
                step_kls[t - 2] += weighted

    return VlbTerms(prior_kl=prior, step_kls=step_kls, decoder_nll=decoder, positions=z0.positions)


def _timestep_probs(sched: Schedule, timestep_probs: Optional[np.ndarray]) -> np.ndarray:
    if timestep_probs is None:
        return np.full(sched.T, 1.0 / sched.T)
    probs = np.asarray(timestep_probs, dtype=np.float64)
    if probs.shape != (sched.T,) or np.any(probs <= 0) or abs(probs.sum() - 1.0) > 1e-9:
        raise DomainError("timestep probabilities must be positive over 1..T and sum to 1")
    return probs


def _terms_for(
    grids: np.ndarray,
    t: np.ndarray,
    K: int,
    denoiser: Denoiser,
    sched: Schedule,
    rng: np.random.Generator,
) -> np.ndarray:
    z0 = LatentGrid(grids, K)
    z_t = sample_q(z0, t, sched, rng)
    z0_hat = denoiser.predict_z0(z_t, t)
    return term_losses(grids, z_t.idx, t, z0_hat.p, sched)


def _exact_terms(grid: np.ndarray, K: int, denoiser: Denoiser, sched: Schedule, rng: np.random.Generator) -> np.ndarray:
    """L_t for t = 1..T, one fresh z_t per timestep."""
    out = np.empty(sched.T, dtype=np.float64)
    for start in range(1, sched.T + 1, EXACT_CHUNK):
        t = np.arange(start, min(start + EXACT_CHUNK, sched.T + 1))
        batch = np.broadcast_to(grid, (t.size,) + grid.shape).copy()
        out[t - 1] = _terms_for(batch, t, K, denoiser, sched, rng)
    return out
