"""
Codebook re-build from sampled encoder features, followed by optional
decoder fine-tuning.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from src.core.exceptions import ValidationError
from src.core.random import make_rng
from src.quantization.domain.autoencoder import ToyAutoencoder
from src.quantization.domain.clustering import afkmc2_seed, kmeans, sample_features
from src.quantization.domain.codebook import Codebook, quantization_mse, usage
from src.quantization.application.vq_training_service import fine_tune_decoder

logger = logging.getLogger(__name__)


class RefitConfig(BaseModel):
    """Parameters of the re-build step."""

    P: int = Field(default=20000, ge=1, description="number of sampled features")
    K_target: int = Field(default=64, ge=1)
    mc_chain_len: int = Field(default=200, ge=1)
    kmeans_iters: int = Field(default=100, ge=0)
    kmeans_tol: float = Field(default=1e-6, ge=0.0)
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def check_sample_size(self) -> "RefitConfig":
        if self.P < 10 * self.K_target:
            raise ValueError(f"P={self.P} must be at least 10 * K_target = {10 * self.K_target}")
        return self


def rebuild(cb: Codebook, dataset: np.ndarray, cfg: RefitConfig, rng: Optional[np.random.Generator] = None) -> Codebook:
    """Replace the codebook with k-means centers of uniformly sampled features.

    Args:
        cb: The codebook being replaced; only its dimension is used.
        dataset: Feature grids of shape (N, h, w, d).
        cfg: Re-build parameters.
        rng: Random stream; derived from ``cfg.seed`` when omitted.

    Returns:
        A new codebook with ``cfg.K_target`` vectors and zeroed hit counts.
    """
    rng = rng if rng is not None else make_rng(cfg.seed)
    dataset = np.asarray(dataset, dtype=np.float64)
    if dataset.shape[-1] != cb.d:
        raise ValidationError(f"feature dimension {dataset.shape[-1]} does not match codebook d={cb.d}")

    features = sample_features(dataset, cfg.P, rng)
    seeds = afkmc2_seed(features, cfg.K_target, cfg.mc_chain_len, rng)
    centers = kmeans(features, seeds, cfg.kmeans_iters, cfg.kmeans_tol)
    rebuilt = Codebook(centers)
    rebuilt.check_duplicates()
    logger.info(f"Rebuilt codebook: K {cb.K} -> {rebuilt.K} from {cfg.P} sampled features")
    return rebuilt


@dataclass
class RefitReport:
    usage_before: float
    usage_after: float
    mse_before: float
    mse_after: float
    fine_tune_trace: List[float]


class RefitService:
    """Runs re-build plus decoder fine-tuning on an image dataset."""

    def __init__(self, cfg: RefitConfig, fine_tune_steps: int = 0, fine_tune_lr: float = 1e-4):
        self.cfg = cfg
        self.fine_tune_steps = fine_tune_steps
        self.fine_tune_lr = fine_tune_lr

    def run(self, images: np.ndarray, ae: ToyAutoencoder, cb: Codebook, rng: np.random.Generator):
        """Rebuild ``cb`` from the features ``ae`` produces on ``images``.

        Returns:
            A tuple of (new codebook, RefitReport).
        """
        features = ae.encode_numpy(images)
        usage_before = usage([cb.lookup_nearest(features)[0]], cb.K)
        mse_before = quantization_mse(features, cb)

        rebuilt = rebuild(cb, features, self.cfg, rng)

        usage_after = usage([rebuilt.lookup_nearest(features)[0]], rebuilt.K)
        mse_after = quantization_mse(features, rebuilt)
        logger.info(
            f"Refit usage {usage_before:.4f} -> {usage_after:.4f}, "
            f"quantization MSE {mse_before:.6g} -> {mse_after:.6g}"
        )

        trace: List[float] = []
        if self.fine_tune_steps:
            trace = fine_tune_decoder(images, ae, rebuilt, self.fine_tune_steps, self.fine_tune_lr, rng)
        return rebuilt, RefitReport(usage_before, usage_after, mse_before, mse_after, trace)
