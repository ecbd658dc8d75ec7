"""
Differentiable per-sample bound terms L_t for training.
"""

import numpy as np
import torch

from src.diffusion.domain.schedule import Schedule
from src.diffusion.domain.transitions import PROB_FLOOR, posterior_probs, theta


def vlb_term_torch(
    z0_idx: np.ndarray,
    zt_idx: np.ndarray,
    t: np.ndarray,
    z0_hat: torch.Tensor,
    sched: Schedule,
) -> torch.Tensor:
    """L_t per grid in nats for a batch (B, h, w) with one t per grid.

    t = 1 gives -log z0_hat[z0]; t >= 2 gives KL(q(z_{t-1} | z_t, z_0) || N[theta(z_t, z0_hat)]).
    """
    K = z0_hat.shape[-1]
    t = np.asarray(t, dtype=np.int64)
    z0 = torch.from_numpy(np.asarray(z0_idx, dtype=np.int64))

    picked = torch.gather(z0_hat, -1, z0[..., None])[..., 0]
    nll = -torch.log(picked.clamp_min(PROB_FLOOR)).sum(dim=(1, 2))

    alpha = torch.from_numpy(sched.alpha[t]).reshape(-1, 1, 1, 1)
    alpha_bar_prev = torch.from_numpy(sched.alpha_bar[t - 1]).reshape(-1, 1, 1, 1)
    zt_onehot = torch.from_numpy(np.eye(K)[zt_idx])
    model = theta(zt_onehot, z0_hat, alpha, alpha_bar_prev, K)
    model = model / model.sum(-1, keepdim=True)
    true = torch.from_numpy(posterior_probs(zt_idx, np.eye(K)[z0_idx], t, sched))
    kl = (torch.xlogy(true, true) - torch.xlogy(true, model.clamp_min(PROB_FLOOR))).sum(dim=(1, 2, 3))

    return torch.where(torch.from_numpy(t == 1), nll, kl)
