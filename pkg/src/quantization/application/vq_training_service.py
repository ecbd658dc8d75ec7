"""
End-to-end training of the toy autoencoder and its codebook.
"""

import logging
import math
from typing import Callable, List, Optional, Tuple

import numpy as np
import torch
from pydantic import BaseModel, Field

from src.core.exceptions import TrainingDivergenceError, ValidationError
from src.quantization.domain.autoencoder import ToyAutoencoder, check_images
from src.quantization.domain.codebook import Codebook, nearest_codes
from src.quantization.domain.losses import straight_through, vq_loss

logger = logging.getLogger(__name__)

DIVERGENCE_GUARD = 1e6
TRACE_SMOOTHING = 0.9


class VqTrainingConfig(BaseModel):
    """Parameters of the toy VQ training stage."""

    K: int = Field(default=64, ge=2)
    d: int = Field(default=16, ge=1)
    patch: int = Field(default=4, ge=1)
    beta_commit: float = Field(default=0.25, ge=0.0)
    steps: int = Field(default=500, ge=0)
    lr: float = Field(default=0.01, gt=0.0)
    batch: int = Field(default=0, ge=0, description="images per step; 0 uses the whole dataset")
    fine_tune_lr: float = Field(default=1e-4, gt=0.0)


class VqObjective:
    """One forward pass of the VQ objective with its intermediate tensors."""

    def __init__(self, ae: ToyAutoencoder, codes: torch.Tensor, images: np.ndarray, beta_commit: float):
        self.x = torch.from_numpy(np.ascontiguousarray(images))
        self.enc_out = ae.encode(self.x)
        idx = nearest_codes(self.enc_out.detach().reshape(-1, ae.d).numpy(), codes.detach().numpy())
        self.idx = idx.reshape(tuple(self.enc_out.shape[:-1]))
        self.z_q = codes[torch.from_numpy(self.idx)]
        self.decoder_input = straight_through(self.enc_out, self.z_q)
        self.x_hat = ae.decode_raw(self.decoder_input)
        n = images.shape[0]
        recon, codebook, commit = vq_loss(self.x, self.x_hat, self.enc_out, self.z_q, beta_commit)
        self.recon = recon / n
        self.codebook = codebook / n
        self.commit = commit / n

    @property
    def total(self) -> torch.Tensor:
        return self.recon + self.codebook + self.commit


def _check_pass_through(objective: VqObjective) -> None:
    """Encoder sensitivity to the reconstruction term equals the decoder-input sensitivity."""
    g_enc, g_dec = torch.autograd.grad(
        objective.recon, [objective.enc_out, objective.decoder_input], retain_graph=True
    )
    assert torch.equal(g_enc, g_dec), "straight-through gradient contract violated"


def _batch(images: np.ndarray, batch: int, rng: np.random.Generator) -> np.ndarray:
    if batch <= 0 or batch >= images.shape[0]:
        return images
    return images[rng.integers(0, images.shape[0], size=batch)]


def _guard(step: int, value: float, stage: str) -> None:
    if not math.isfinite(value) or value > DIVERGENCE_GUARD:
        raise TrainingDivergenceError(step=step, loss=value, stage=stage)


def train_vq_autoencoder(
    dataset: np.ndarray,
    ae: ToyAutoencoder,
    cb: Codebook,
    beta_commit: float,
    steps: int,
    lr: float,
    rng: np.random.Generator,
    batch: int = 0,
    on_step: Optional[Callable[[int, float], None]] = None,
) -> Tuple[ToyAutoencoder, Codebook, List[float]]:
    """Train encoder, decoder and codebook by plain gradient descent on the VQ loss.

    Args:
        dataset: Images of shape (N, c, H, W).
        ae: Autoencoder, updated in place.
        cb: Codebook, updated in place; hit counts accumulate over training.
        beta_commit: Commitment weight.
        steps: Number of gradient steps.
        lr: Fixed learning rate.
        rng: Random stream for minibatch selection.
        batch: Images per step, 0 for the whole dataset.
        on_step: Optional callback receiving (step, smoothed total loss).

    Returns:
        The trained autoencoder, the trained codebook and the smoothed loss trace.
    """
    images = check_images(dataset, ae.patch)
    if ae.d != cb.d:
        raise ValidationError(f"autoencoder d={ae.d} does not match codebook d={cb.d}")

    codes = torch.tensor(cb.vectors, dtype=torch.float64, requires_grad=True)
    params = ae.parameters() + [codes]
    for p in ae.parameters():
        p.requires_grad_(True)

    logger.info(f"Training VQ autoencoder: steps={steps}, lr={lr}, K={cb.K}, d={cb.d}")
    trace: List[float] = []
    smoothed = None
    for step in range(1, steps + 1):
        objective = VqObjective(ae, codes, _batch(images, batch, rng), beta_commit)
        total = objective.total
        value = float(total.detach())
        _guard(step, value, "vq training")
        _check_pass_through(objective)

        for p in params:
            p.grad = None
        total.backward()
        with torch.no_grad():
            for p in params:
                p -= lr * p.grad

        cb.hit_counts += np.bincount(objective.idx.ravel(), minlength=cb.K)
        smoothed = value if smoothed is None else TRACE_SMOOTHING * smoothed + (1 - TRACE_SMOOTHING) * value
        trace.append(smoothed)
        if on_step:
            on_step(step, smoothed)
        logger.debug(f"vq step {step}: total={value:.6g} recon={float(objective.recon):.6g}")

    for p in ae.parameters():
        p.requires_grad_(False)
    cb.vectors = codes.detach().numpy().copy()
    cb.check_duplicates()
    logger.info(f"Finished VQ training, final smoothed loss {trace[-1] if trace else float('nan'):.6g}")
    return ae, cb, trace


def fine_tune_decoder(
    dataset: np.ndarray,
    ae: ToyAutoencoder,
    cb: Codebook,
    steps: int,
    lr: float,
    rng: np.random.Generator,
    batch: int = 0,
) -> List[float]:
    """Train the decoder alone on reconstruction loss, encoder and codebook frozen."""
    images = check_images(dataset, ae.patch)
    codes = torch.from_numpy(cb.vectors)
    decoder = [ae.dec_weight, ae.dec_bias]
    for p in decoder:
        p.requires_grad_(True)

    trace: List[float] = []
    for step in range(1, steps + 1):
        x = _batch(images, batch, rng)
        with torch.no_grad():
            features = ae.encode(x)
        idx = nearest_codes(features.reshape(-1, ae.d).numpy(), cb.vectors).reshape(tuple(features.shape[:-1]))
        x_hat = ae.decode_raw(codes[torch.from_numpy(idx)])
        recon = ((torch.from_numpy(np.ascontiguousarray(x)) - x_hat) ** 2).sum() / x.shape[0]
        value = float(recon.detach())
        _guard(step, value, "decoder fine-tuning")

        for p in decoder:
            p.grad = None
        recon.backward()
        with torch.no_grad():
            for p in decoder:
                p -= lr * p.grad
        trace.append(value)

    for p in decoder:
        p.requires_grad_(False)
    if trace:
        logger.info(f"Fine-tuned decoder for {steps} steps: recon {trace[0]:.6g} -> {trace[-1]:.6g}")
    return trace
