"""
VQ objective terms and the straight-through pass across quantization.
"""

from typing import Tuple

import numpy as np
import torch


class _StraightThrough(torch.autograd.Function):
    """Forward returns z_q unchanged; backward hands the incoming gradient to enc_out."""

    @staticmethod
    def forward(ctx, enc_out: torch.Tensor, z_q: torch.Tensor) -> torch.Tensor:
        return z_q.clone()

    @staticmethod
    def backward(ctx, grad_output: torch.Tensor) -> Tuple[torch.Tensor, None]:
        return grad_output, None


def straight_through(enc_out: torch.Tensor, z_q: torch.Tensor) -> torch.Tensor:
    """Bit-exact z_q in the forward pass with an identity gradient into ``enc_out``.

    ``z_q`` receives no gradient through this path; the codebook is trained by
    the codebook term of the VQ loss only.
    """
    if enc_out.shape != z_q.shape:
        raise ValueError(f"shape mismatch: {tuple(enc_out.shape)} vs {tuple(z_q.shape)}")
    return _StraightThrough.apply(enc_out, z_q)


def stop_gradient(x):
    """sg[x] for torch tensors; numpy arrays carry no gradient anyway."""
    return x.detach() if isinstance(x, torch.Tensor) else x


def vq_loss(x, x_hat, enc_out, z_q, beta_commit: float = 0.25):
    """(reconstruction, codebook, commitment) terms, each a sum of squared errors.

    Works on numpy arrays and torch tensors alike.
    """
    if x.shape != x_hat.shape or enc_out.shape != z_q.shape:
        raise ValueError("vq_loss inputs must have matching shapes")
    recon = ((x - x_hat) ** 2).sum()
    codebook = ((stop_gradient(enc_out) - z_q) ** 2).sum()
    commit = beta_commit * ((stop_gradient(z_q) - enc_out) ** 2).sum()
    if isinstance(recon, np.generic):
        return float(recon), float(codebook), float(commit)
    return recon, codebook, commit
