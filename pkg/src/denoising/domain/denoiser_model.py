"""
Reference denoising network mu(z_t, t).

Architecture: a per-position category embedding, a global mean of those
embeddings broadcast back to every position, a sinusoidal time embedding,
then an MLP with SiLU activations producing residual logits. The output
distribution is softmax(mu(z_t, t) + onehot(z_t)).

Parameters live in one flat float64 vector; ``ParamLayout`` maps names to
slices of it.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch
from pydantic import BaseModel, Field

from src.core.exceptions import NonFiniteError, ValidationError
from src.denoising.domain.losses import vlb_term_torch
from src.denoising.domain.optimizer import AdamState
from src.diffusion.domain.grids import LatentGrid, ProbGrid
from src.diffusion.domain.interfaces.denoiser_interface import Denoiser, Timesteps
from src.diffusion.domain.schedule import Schedule

logger = logging.getLogger(__name__)


class DenoiserConfig(BaseModel):
    embed_dim: int = Field(default=64, ge=1)
    time_dim: int = Field(default=64, ge=2)
    hidden: Tuple[int, int] = (256, 256)
    time_base: float = Field(default=10000.0, gt=1.0)


@dataclass(frozen=True)
class ParamLayout:
    """Name -> (offset, shape) index map over the flat parameter vector."""

    entries: Dict[str, Tuple[int, Tuple[int, ...]]]
    size: int

    @classmethod
    def build(cls, shapes: List[Tuple[str, Tuple[int, ...]]]) -> "ParamLayout":
        entries, offset = {}, 0
        for name, shape in shapes:
            entries[name] = (offset, shape)
            offset += int(np.prod(shape))
        return cls(entries=entries, size=offset)

    def views(self, flat):
        """Reshaped views of ``flat`` (numpy or torch) keyed by name."""
        out = {}
        for name, (offset, shape) in self.entries.items():
            out[name] = flat[offset:offset + int(np.prod(shape))].reshape(shape)
        return out


def time_embedding(t: np.ndarray, dim: int, base: float) -> torch.Tensor:
    """Sinusoidal embedding [sin(t w_i), cos(t w_i)] with w_i = base^(-i / (dim/2))."""
    half = dim // 2
    freqs = base ** (-np.arange(half, dtype=np.float64) / half)
    args = np.asarray(t, dtype=np.float64)[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(args), np.cos(args)], axis=1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros((emb.shape[0], 1))], axis=1)
    return torch.from_numpy(emb)


@dataclass(eq=False)
class DenoiserModel(Denoiser):
    """The trainable denoiser with its parameters and optional Adam state."""

    categories: int
    h: int
    w: int
    config: DenoiserConfig
    params: np.ndarray
    adam: Optional[AdamState] = None
    layout: ParamLayout = field(init=False)

    def __post_init__(self):
        self.layout = self._layout(self.categories, self.h, self.w, self.config)
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.params.shape != (self.layout.size,):
            raise ValidationError(f"expected {self.layout.size} parameters, got {self.params.shape}")
        if not np.all(np.isfinite(self.params)):
            raise ValidationError("denoiser parameters must be finite")

    @property
    def K(self) -> int:
        return self.categories

    @staticmethod
    def _layout(K: int, h: int, w: int, cfg: DenoiserConfig) -> ParamLayout:
        e, td = cfg.embed_dim, cfg.time_dim
        h1, h2 = cfg.hidden
        return ParamLayout.build([
            ("embed", (h * w, K, e)),
            ("w1", (2 * e + td, h1)),
            ("b1", (h1,)),
            ("w2", (h1, h2)),
            ("b2", (h2,)),
            ("w3", (h2, K)),
            ("b3", (K,)),
        ])

    @classmethod
    def init(cls, K: int, h: int, w: int, cfg: DenoiserConfig, rng: np.random.Generator) -> "DenoiserModel":
        """Gaussian weights scaled by 1/sqrt(fan_in); the output layer starts small."""
        layout = cls._layout(K, h, w, cfg)
        params = np.zeros(layout.size)
        views = layout.views(params)
        for name, (_, shape) in layout.entries.items():
            if name.startswith("b"):
                continue
            fan_in = shape[-2] if name.startswith("w") else 1
            scale = 0.01 if name == "w3" else 1.0 / math.sqrt(fan_in)
            views[name][...] = rng.normal(0.0, scale, size=shape)
        return cls(K, h, w, cfg, params)

    @classmethod
    def zeros(cls, K: int, h: int, w: int, cfg: DenoiserConfig) -> "DenoiserModel":
        return cls(K, h, w, cfg, np.zeros(cls._layout(K, h, w, cfg).size))

    def _check(self, z_t: LatentGrid) -> np.ndarray:
        if z_t.K != self.K or z_t.h != self.h or z_t.w != self.w:
            raise ValidationError(
                f"grid ({z_t.h}x{z_t.w}, K={z_t.K}) does not match model ({self.h}x{self.w}, K={self.K})"
            )
        return z_t.idx.reshape(-1, self.h, self.w)

    def forward(self, flat: torch.Tensor, zt_idx: np.ndarray, t: np.ndarray) -> torch.Tensor:
        """z0_hat of shape (B, h, w, K) for grids (B, h, w) and per-grid timesteps (B,)."""
        p = self.layout.views(flat)
        B = zt_idx.shape[0]
        P = self.h * self.w
        codes = torch.from_numpy(zt_idx.reshape(B, P))

        emb = p["embed"][torch.arange(P)[None, :], codes]
        pooled = emb.mean(dim=1, keepdim=True).expand(-1, P, -1)
        temb = time_embedding(t, self.config.time_dim, self.config.time_base)[:, None, :].expand(-1, P, -1)
        x = torch.cat([emb, pooled, temb], dim=-1)

        x = _finite(torch.nn.functional.silu(x @ p["w1"] + p["b1"]), "hidden1")
        x = _finite(torch.nn.functional.silu(x @ p["w2"] + p["b2"]), "hidden2")
        mu = _finite(x @ p["w3"] + p["b3"], "logits")

        logits = mu + torch.nn.functional.one_hot(codes, self.K).to(torch.float64)
        return torch.softmax(logits, dim=-1).reshape(B, self.h, self.w, self.K)

    def predict_z0(self, z_t: LatentGrid, t: Timesteps) -> ProbGrid:
        idx = self._check(z_t)
        t = np.broadcast_to(np.asarray(t, dtype=np.int64), (idx.shape[0],))
        with torch.no_grad():
            out = self.forward(torch.from_numpy(self.params), idx, t).numpy()
        return ProbGrid(out.reshape(z_t.idx.shape + (self.K,)))

    def predict_z0_logits(self, z_t: LatentGrid, t: Timesteps) -> ProbGrid:
        """softmax(mu + onehot(z_t)); the name follows the residual-logit form."""
        return self.predict_z0(z_t, t)

    def loss(self, flat: torch.Tensor, z0: LatentGrid, z_t: LatentGrid, t: np.ndarray, weights: np.ndarray, sched: Schedule):
        """Importance-weighted mean bound per position, plus unweighted per-grid terms."""
        idx = self._check(z_t)
        z0_hat = self.forward(flat, idx, t)
        per_sample = vlb_term_torch(z0.idx, idx, t, z0_hat, sched)
        value = (torch.from_numpy(weights) * per_sample).mean() / (self.h * self.w)
        return value, per_sample

    def loss_and_grad(
        self, z0: LatentGrid, z_t: LatentGrid, t: np.ndarray, weights: np.ndarray, sched: Schedule
    ) -> Tuple[float, np.ndarray, np.ndarray]:
        flat = torch.tensor(self.params, requires_grad=True)
        value, per_sample = self.loss(flat, z0, z_t, t, weights, sched)
        (grad,) = torch.autograd.grad(value, flat)
        return float(value.detach()), grad.numpy(), per_sample.detach().numpy()

    def loss_at(self, params: np.ndarray, z0: LatentGrid, z_t: LatentGrid, t: np.ndarray, weights: np.ndarray, sched: Schedule) -> float:
        with torch.no_grad():
            value, _ = self.loss(torch.from_numpy(params), z0, z_t, t, weights, sched)
        return float(value)

    def to_arrays(self) -> dict:
        cfg = self.config
        return {
            "shape": np.array([self.K, self.h, self.w, cfg.embed_dim, cfg.time_dim, *cfg.hidden], dtype=np.int64),
            "time_base": np.array([cfg.time_base]),
            "params": self.params,
        }

    @classmethod
    def from_arrays(cls, arrays: dict) -> "DenoiserModel":
        K, h, w, e, td, h1, h2 = (int(x) for x in arrays["shape"])
        cfg = DenoiserConfig(embed_dim=e, time_dim=td, hidden=(h1, h2), time_base=float(arrays["time_base"][0]))
        return cls(K, h, w, cfg, arrays["params"].copy())


def _finite(x: torch.Tensor, layer: str) -> torch.Tensor:
    if not torch.all(torch.isfinite(x)):
        raise NonFiniteError(layer)
    return x
