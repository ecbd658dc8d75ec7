"""
Categorical diffusion mathematics with uniform-mixing transitions.

Forward kernel:   q(z_t | z_{t-1}) = Cat((1 - beta_t) z_{t-1} + beta_t / K)
Marginal:         q(z_t | z_0)     = Cat(alpha_bar_t z_0 + (1 - alpha_bar_t) / K)
Posterior:        q(z_{t-1} | z_t, z_0) = N[theta(z_t, z_0)] with
                  theta = [alpha_t z_t + (1 - alpha_t) / K] * [alpha_bar_{t-1} z_0 + (1 - alpha_bar_{t-1}) / K]

The uniform-mixing Q_t is symmetric, so the transpose in the Bayes step is
immaterial here; it would not be for asymmetric kernels.
"""

import logging
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from scipy.special import xlogy

from src.core.exceptions import DomainError, ValidationError
from src.diffusion.domain.grids import LatentGrid, ProbGrid, one_hot
from src.diffusion.domain.schedule import Schedule

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-30
MAX_ENUMERABLE_K = 1024

Timesteps = Union[int, np.ndarray]


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """One-step kernel Q = (1 - beta) I + beta / K."""

    K: int
    q: np.ndarray


def transition_matrix(beta: float, K: int) -> TransitionMatrix:
    """One-step kernel for beta in [0, 1]; beta = 0 gives the identity and beta = 1 full resampling."""
    if K < 2:
        raise DomainError(f"K must be >= 2, got {K}")
    if not 0.0 <= beta <= 1.0:
        raise DomainError(f"beta must lie in [0, 1], got {beta}")
    q = (1.0 - beta) * np.eye(K, dtype=np.float64) + beta / K
    return TransitionMatrix(K=K, q=q)


def _check_timesteps(t: Timesteps, lo: int, sched: Schedule) -> np.ndarray:
    t = np.asarray(t, dtype=np.int64)
    if t.size and (t.min() < lo or t.max() > sched.T):
        raise DomainError(f"timesteps must lie in [{lo}, {sched.T}]")
    return t


def _coef(values: np.ndarray, t: Timesteps, ndim: int) -> np.ndarray:
    """Look up per-timestep coefficients and pad them to broadcast over ``ndim`` dims."""
    v = np.asarray(values[np.asarray(t)], dtype=np.float64)
    return v.reshape(v.shape + (1,) * (ndim - v.ndim))


def q_step(z_prev: ProbGrid, beta: float) -> ProbGrid:
    """Apply one forward step, beta in [0, 1], to a grid of distributions."""
    if not 0.0 <= beta <= 1.0:
        raise DomainError(f"beta must lie in [0, 1], got {beta}")
    return ProbGrid((1.0 - beta) * z_prev.p + beta / z_prev.K)


def q_marginal(z0: LatentGrid, alpha_bar_t) -> ProbGrid:
    """Closed-form q(z_t | z_0).

    ``alpha_bar_t`` is a scalar or an array broadcastable over the batch
    dimensions of ``z0``.
    """
    ab = np.asarray(alpha_bar_t, dtype=np.float64)
    if np.any(ab < 0) or np.any(ab > 1):
        raise DomainError("alpha_bar must lie in [0, 1]")
    ab = ab.reshape(ab.shape + (1,) * (z0.idx.ndim + 1 - ab.ndim))
    return ProbGrid(ab * z0.one_hot() + (1.0 - ab) / z0.K)


def sample_q(z0: LatentGrid, t: Timesteps, sched: Schedule, rng: np.random.Generator) -> LatentGrid:
    """Draw z_t ~ q(z_t | z_0) independently per position.

    Each position keeps its value with probability alpha_bar_t and is
    otherwise resampled uniformly, which is exactly the mixture form of the
    closed-form marginal.
    """
    t = _check_timesteps(t, 0, sched)
    ab = _coef(sched.alpha_bar, t, z0.idx.ndim)
    keep = rng.random(z0.idx.shape) < ab
    noise = rng.integers(0, z0.K, size=z0.idx.shape, dtype=np.int64)
    return LatentGrid(np.where(keep, z0.idx, noise), z0.K)


def theta(zt_onehot, z0_probs, alpha_t, alpha_bar_prev, K: int):
    """Unnormalized posterior weights.

    Uses arithmetic only so the same expression serves numpy arrays and
    torch tensors.
    """
    return (alpha_t * zt_onehot + (1.0 - alpha_t) / K) * (alpha_bar_prev * z0_probs + (1.0 - alpha_bar_prev) / K)


def posterior_probs(zt_idx: np.ndarray, z0_probs: np.ndarray, t: Timesteps, sched: Schedule) -> np.ndarray:
    """Normalized N[theta(z_t, z0)] on raw arrays without input validation."""
    K = z0_probs.shape[-1]
    ndim = z0_probs.ndim
    th = theta(
        one_hot(zt_idx, K),
        z0_probs,
        _coef(sched.alpha, t, ndim),
        _coef(sched.alpha_bar, np.asarray(t) - 1, ndim),
        K,
    )
    total = th.sum(-1)
    assert np.all(total > 0), "posterior weights vanished"
    return th / total[..., None]


def posterior(z_t: LatentGrid, z0_dist: ProbGrid, t: Timesteps, sched: Schedule) -> ProbGrid:
    """q(z_{t-1} | z_t, z_0) for one-hot z_0, or the plug-in reverse step for a soft z_0."""
    t = _check_timesteps(t, 2, sched)
    if z0_dist.p.shape[:-1] != z_t.idx.shape or z0_dist.K != z_t.K:
        raise ValidationError(
            f"z0 distribution shape {z0_dist.p.shape} does not match grid {z_t.idx.shape} with K={z_t.K}"
        )
    return ProbGrid(posterior_probs(z_t.idx, z0_dist.p, t, sched))


def brute_force_posterior(z_t: int, z0: int, t: int, sched: Schedule, K: int) -> np.ndarray:
    """Posterior by explicit Bayes over all K values of z_{t-1}.

    Uses only products of transition matrices, never the closed form.
    """
    if K > MAX_ENUMERABLE_K:
        raise DomainError(f"K must be <= {MAX_ENUMERABLE_K} for enumeration, got {K}")
    _check_timesteps(t, 2, sched)
    q_bar = np.eye(K, dtype=np.float64)
    for u in range(1, t):
        q_bar = q_bar @ transition_matrix(sched.beta[u], K).q
    q_t = transition_matrix(sched.beta[t], K).q
    joint = q_bar[z0, :] * q_t[:, z_t]
    return joint / joint.sum()


def cumulative_matrix(sched: Schedule, t: int, K: int) -> np.ndarray:
    """Q_1 Q_2 ... Q_t by repeated multiplication."""
    q_bar = np.eye(K, dtype=np.float64)
    for u in range(1, t + 1):
        q_bar = q_bar @ transition_matrix(sched.beta[u], K).q
    return q_bar


def reverse_step_dist(z_t: LatentGrid, z0_hat: ProbGrid, t: int, sched: Schedule) -> ProbGrid:
    """p(z_{t-1} | z_t): z0_hat itself at t = 1, the plug-in posterior otherwise."""
    _check_timesteps(t, 1, sched)
    if int(t) == 1:
        return z0_hat
    return posterior(z_t, z0_hat, t, sched)


def reverse_step_mixture(z_t: LatentGrid, z0_hat: ProbGrid, t: int, sched: Schedule) -> ProbGrid:
    """Mixture of per-category posteriors, sum_k z0_hat[k] * q(z_{t-1} | z_t, z_0 = k).

    Not used for sampling; kept as the reference the plug-in step is compared against.
    """
    t = _check_timesteps(t, 2, sched)
    K = z_t.K
    out = np.zeros(z0_hat.p.shape, dtype=np.float64)
    for k in range(K):
        onehot_k = np.zeros_like(z0_hat.p)
        onehot_k[..., k] = 1.0
        out += z0_hat.p[..., k:k + 1] * posterior_probs(z_t.idx, onehot_k, t, sched)
    return ProbGrid(out)


def categorical_kl(p: np.ndarray, q: np.ndarray, floor: float = PROB_FLOOR) -> Tuple[np.ndarray, bool]:
    """KL(p || q) along the last axis; q is clamped at ``floor`` before the log.

    Returns the per-vector KL and whether clamping touched a term with p > 0.
    """
    clamped = bool(np.any((q < floor) & (p > 0)))
    q = np.maximum(q, floor)
    return (xlogy(p, p) - xlogy(p, q)).sum(-1), clamped


def kl_step(z_t: LatentGrid, z0_true: LatentGrid, z0_hat: ProbGrid, t: Timesteps, sched: Schedule) -> float:
    """Sum over positions of KL(q(z_{t-1} | z_t, z_0) || p(z_{t-1} | z_t)), in nats."""
    true = posterior(z_t, ProbGrid(z0_true.one_hot()), t, sched)
    model = posterior(z_t, z0_hat, t, sched)
    kl, clamped = categorical_kl(true.p, model.p)
    if clamped:
        logger.warning(f"Clamped model probabilities at {PROB_FLOOR} while computing a step KL")
    return float(kl.sum())
