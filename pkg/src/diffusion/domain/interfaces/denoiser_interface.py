from abc import ABC, abstractmethod
from typing import Union

import numpy as np

from src.diffusion.domain.grids import LatentGrid, ProbGrid

Timesteps = Union[int, np.ndarray]


class Denoiser(ABC):
    """Interface for anything that predicts z_0 from a noisy grid z_t."""

    @property
    @abstractmethod
    def K(self) -> int:
        """Number of categories."""
        pass

    @abstractmethod
    def predict_z0(self, z_t: LatentGrid, t: Timesteps) -> ProbGrid:
        """Return a distribution over z_0 per position.

        ``t`` is either one timestep shared by the batch or an array with one
        timestep per leading batch entry of ``z_t``.
        """
        pass
