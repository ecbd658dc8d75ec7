"""
Patch-linear toy encoder/decoder.

Images are float64 arrays of shape (N, c, H, W) with pixels in [0, 1]. The
encoder flattens each non-overlapping patch x patch block and maps it
linearly to d dimensions; the decoder maps back.
"""

import logging
from dataclasses import dataclass
from typing import List, Union

import numpy as np
import torch
from einops import rearrange

from src.core.exceptions import DomainError, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_PATCH = 4

Array = Union[np.ndarray, torch.Tensor]


def check_images(images: np.ndarray, patch: int) -> np.ndarray:
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4:
        raise ValidationError(f"images must have shape (N, c, H, W), got {images.shape}")
    if images.shape[2] % patch or images.shape[3] % patch:
        raise DomainError(f"image size {images.shape[2:]} is not divisible by patch {patch}")
    return images


def patchify(images: Array, patch: int) -> Array:
    """(N, c, H, W) -> (N, H/p, W/p, c*p*p)."""
    return rearrange(images, "n c (h p1) (w p2) -> n h w (c p1 p2)", p1=patch, p2=patch)


def unpatchify(patches: Array, patch: int, channels: int) -> Array:
    """(N, h, w, c*p*p) -> (N, c, h*p, w*p)."""
    return rearrange(patches, "n h w (c p1 p2) -> n c (h p1) (w p2)", c=channels, p1=patch, p2=patch)


@dataclass(eq=False)
class ToyAutoencoder:
    """Linear patch encoder and decoder with torch float64 parameters."""

    patch: int
    channels: int
    enc_weight: torch.Tensor
    enc_bias: torch.Tensor
    dec_weight: torch.Tensor
    dec_bias: torch.Tensor

    def __post_init__(self):
        for name in ("enc_weight", "enc_bias", "dec_weight", "dec_bias"):
            setattr(self, name, torch.as_tensor(getattr(self, name), dtype=torch.float64))
        pixels = self.pixel_dim
        if self.enc_weight.shape != (pixels, self.d) or self.enc_bias.shape != (self.d,):
            raise ValidationError(f"encoder parameters must map {pixels} -> {self.d}")
        if self.dec_weight.shape != (self.d, pixels) or self.dec_bias.shape != (pixels,):
            raise ValidationError(f"decoder parameters must map {self.d} -> {pixels}")
        for p in self.parameters():
            if not torch.all(torch.isfinite(p)):
                raise ValidationError("autoencoder parameters must be finite")

    @property
    def d(self) -> int:
        return self.enc_weight.shape[1]

    @property
    def pixel_dim(self) -> int:
        return self.channels * self.patch * self.patch

    @classmethod
    def init(cls, d: int, rng: np.random.Generator, patch: int = DEFAULT_PATCH, channels: int = 1) -> "ToyAutoencoder":
        """Gaussian weights scaled by 1/sqrt(fan_in), zero biases."""
        pixels = channels * patch * patch
        return cls(
            patch=patch,
            channels=channels,
            enc_weight=rng.normal(0.0, 1.0 / np.sqrt(pixels), size=(pixels, d)),
            enc_bias=np.zeros(d),
            dec_weight=rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, pixels)),
            dec_bias=np.zeros(pixels),
        )

    @classmethod
    def identity(cls, patch: int = DEFAULT_PATCH, channels: int = 1) -> "ToyAutoencoder":
        """Encoder and decoder are identities on raw patch vectors."""
        pixels = channels * patch * patch
        eye = np.eye(pixels)
        return cls(patch, channels, eye, np.zeros(pixels), eye.copy(), np.zeros(pixels))

    def parameters(self) -> List[torch.Tensor]:
        return [self.enc_weight, self.enc_bias, self.dec_weight, self.dec_bias]

    def encode(self, images: Array) -> torch.Tensor:
        """Feature grid (N, H/p, W/p, d) as a torch tensor."""
        if isinstance(images, np.ndarray):
            images = torch.from_numpy(check_images(images, self.patch))
        return patchify(images, self.patch) @ self.enc_weight + self.enc_bias

    def decode_raw(self, z_q: Array) -> torch.Tensor:
        """Unclamped reconstruction, used inside the loss."""
        z_q = torch.as_tensor(z_q, dtype=torch.float64)
        if z_q.shape[-1] != self.d:
            raise ValidationError(f"feature dimension {z_q.shape[-1]} does not match d={self.d}")
        return unpatchify(z_q @ self.dec_weight + self.dec_bias, self.patch, self.channels)

    def encode_numpy(self, images: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            return self.encode(images).numpy()

    def decode(self, z_q: Array) -> np.ndarray:
        """Reconstructed images clamped to [0, 1]."""
        with torch.no_grad():
            return self.decode_raw(z_q).clamp(0.0, 1.0).numpy()

    def to_arrays(self) -> dict:
        return {
            "shape": np.array([self.patch, self.channels], dtype=np.int64),
            "enc_weight": self.enc_weight.detach().numpy(),
            "enc_bias": self.enc_bias.detach().numpy(),
            "dec_weight": self.dec_weight.detach().numpy(),
            "dec_bias": self.dec_bias.detach().numpy(),
        }

    @classmethod
    def from_arrays(cls, arrays: dict) -> "ToyAutoencoder":
        patch, channels = (int(v) for v in arrays["shape"])
        return cls(
            patch=patch,
            channels=channels,
            enc_weight=arrays["enc_weight"].copy(),
            enc_bias=arrays["enc_bias"].copy(),
            dec_weight=arrays["dec_weight"].copy(),
            dec_bias=arrays["dec_bias"].copy(),
        )
