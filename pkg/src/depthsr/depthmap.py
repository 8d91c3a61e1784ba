"""The domain object: a single-channel 2-D depth field with range metadata."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ShapeError


@dataclass
class DepthMap:
    """2-D float64 depth (or disparity) field.

    value_range is file-encoding metadata (e.g. (0, 65535) for 16-bit PGM);
    it does not constrain the stored values.
    """

    values: np.ndarray
    value_range: tuple[float, float] = (0.0, 255.0)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ShapeError(f"depth map must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise NumericalError("depth map contains non-finite values")
        lo, hi = self.value_range
        if lo > hi:
            raise ShapeError(f"invalid value_range {self.value_range}")
        self.values = v

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def with_values(self, values: np.ndarray) -> "DepthMap":
        return DepthMap(values=values, value_range=self.value_range)
