"""
Bayes-optimal denoising on an explicitly enumerated latent distribution.
"""

import numpy as np
from scipy.special import softmax

from src.core.exceptions import ValidationError
from src.diffusion.domain.distribution import LatentDistribution
from src.diffusion.domain.grids import LatentGrid, ProbGrid, one_hot
from src.diffusion.domain.interfaces.denoiser_interface import Denoiser, Timesteps
from src.diffusion.domain.schedule import Schedule


def support_posterior(dist: LatentDistribution, z_t: LatentGrid, t: Timesteps, sched: Schedule) -> np.ndarray:
    """q(z_0 = s | z_t) over the support grids, shape (B, S)."""
    if (z_t.h, z_t.w, z_t.K) != (dist.h, dist.w, dist.K):
        raise ValidationError("noisy grid does not match the distribution's grid shape or K")
    zt = z_t.idx.reshape(-1, 1, dist.h * dist.w)
    support = dist.support.reshape(1, -1, dist.h * dist.w)
    ab = np.broadcast_to(sched.alpha_bar[np.asarray(t)], (zt.shape[0],)).reshape(-1, 1, 1)

    with np.errstate(divide="ignore"):
        match = np.log(ab + (1.0 - ab) / dist.K)
        miss = np.log((1.0 - ab) / dist.K)
        log_prior = np.log(dist.probs)[None, :]
    log_lik = np.where(zt == support, match, miss).sum(-1)
    return softmax(log_lik + log_prior, axis=1)


def oracle_denoiser(dist: LatentDistribution, z_t: LatentGrid, t: Timesteps, sched: Schedule) -> ProbGrid:
    """Exact per-position marginal q(z_0 = k | z_t) by enumerating the support."""
    weights = support_posterior(dist, z_t, t, sched)
    marginal = np.einsum("bs,shwk->bhwk", weights, one_hot(dist.support, dist.K))
    return ProbGrid(marginal.reshape(z_t.idx.shape + (dist.K,)))


class OracleDenoiser(Denoiser):
    """Denoiser interface over ``oracle_denoiser``.

    With ``calibrated`` set, predictions for t >= 2 are divided by the
    per-category likelihood q(z_t | z_0 = k) and renormalized, so that
    substituting them into the closed-form posterior yields the exact reverse
    step p(z_{t-1} | z_t). At t = 1 the exact marginal is returned either way.
    """

    def __init__(self, dist: LatentDistribution, sched: Schedule, calibrated: bool = True):
        self.dist = dist
        self.sched = sched
        self.calibrated = calibrated

    @property
    def K(self) -> int:
        return self.dist.K

    def predict_z0(self, z_t: LatentGrid, t: Timesteps) -> ProbGrid:
        marginal = oracle_denoiser(self.dist, z_t, t, self.sched).p
        if not self.calibrated:
            return ProbGrid(marginal)

        t_arr = np.asarray(t)
        ab = self.sched.alpha_bar[t_arr].reshape(t_arr.shape + (1,) * (marginal.ndim - t_arr.ndim))
        likelihood = ab * z_t.one_hot() + (1.0 - ab) / self.K
        reweighted = marginal / likelihood
        reweighted = reweighted / reweighted.sum(-1, keepdims=True)
        return ProbGrid(np.where(t_arr.reshape(ab.shape) == 1, marginal, reweighted))
