"""
Inpainting masks: m = 1 marks a given (known) position, m = 0 one to generate.
"""

from dataclasses import dataclass

import numpy as np

from src.core.exceptions import ValidationError


@dataclass(frozen=True, eq=False)
class Mask:
    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m)
        if m.ndim != 2 or m.size == 0:
            raise ValidationError(f"mask must be a non-empty (h, w) grid, got shape {m.shape}")
        if not np.isin(m, (0, 1)).all():
            raise ValidationError("mask entries must be 0 or 1")
        object.__setattr__(self, "m", m.astype(bool))

    @property
    def h(self) -> int:
        return self.m.shape[0]

    @property
    def w(self) -> int:
        return self.m.shape[1]

    def given_fraction(self) -> float:
        return float(self.m.mean())

    def check_grid(self, h: int, w: int) -> None:
        if (self.h, self.w) != (h, w):
            raise ValidationError(f"mask is {self.h}x{self.w} but the grid is {h}x{w}")


def top_mask(h: int, w: int, keep_fraction: float = 0.375) -> Mask:
    """Generate the upper rows; the lowest ``keep_fraction`` of rows is given."""
    if not 0.0 <= keep_fraction <= 1.0:
        raise ValidationError(f"keep_fraction must lie in [0, 1], got {keep_fraction}")
    m = np.zeros((h, w), dtype=np.int64)
    given_rows = int(round(h * keep_fraction))
    if given_rows:
        m[h - given_rows:, :] = 1
    return Mask(m)


def corner_mask(h: int, w: int) -> Mask:
    """Only the lower-right quarter is given."""
    m = np.zeros((h, w), dtype=np.int64)
    m[h // 2:, w // 2:] = 1
    return Mask(m)


def center_mask(h: int, w: int) -> Mask:
    """The centre quarter is given; the perimeter is generated."""
    m = np.zeros((h, w), dtype=np.int64)
    m[h // 4:h - h // 4, w // 4:w - w // 4] = 1
    return Mask(m)


MASK_PRESETS = {"top": top_mask, "corner": corner_mask, "center": center_mask}
