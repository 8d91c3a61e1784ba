"""Sub-pixel view decomposition and its inverse, the periodic re-organization.

A factor-r decomposition splits an rH x rW map into r*r interleaved H x W
views, one per sub-pixel phase (i, j) (1-based, matching the virtual-camera
positions). Both operations are exact bijections: reorganize(decompose(X)) is
bitwise X.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, UsageError


@dataclass
class ViewGrid:
    """r*r equally sized views stacked as an (r, r, H, W) array.

    views[i-1, j-1] holds the phase-(i, j) view in the paper's 1-based
    convention.
    """

    factor: int
    views: np.ndarray

    def __post_init__(self):
        if self.factor < 2:
            raise ShapeError(f"factor must be >= 2, got {self.factor}")
        v = np.asarray(self.views)
        if v.ndim != 4 or v.shape[0] != self.factor or v.shape[1] != self.factor:
            raise ShapeError(f"views must have shape (r, r, H, W) with r={self.factor}, got {v.shape}")
        self.views = v

    def view(self, i: int, j: int) -> np.ndarray:
        """The (i, j) view, 1-based."""
        if not (1 <= i <= self.factor and 1 <= j <= self.factor):
            raise UsageError(
                f"view indices are 1-based in [1, {self.factor}], got ({i}, {j})")
        return self.views[i - 1, j - 1]


def decompose(hr: np.ndarray, r: int) -> ViewGrid:
    """Split an HR map into its r*r sub-pixel phase views.

    view (i, j) holds hr[r*(a-1)+i, r*(b-1)+j] over all (a, b), 1-based.
    Dimensions must be divisible by r; no implicit cropping.
    """
    hr = np.asarray(hr)
    if hr.ndim != 2:
        raise ShapeError(f"expected a 2-D map, got shape {hr.shape}")
    if r < 2:
        raise ShapeError(f"factor must be >= 2, got {r}")
    h, w = hr.shape
    if h % r != 0 or w % r != 0:
        raise ShapeError(f"map size {h}x{w} not divisible by factor {r}")
    views = np.empty((r, r, h // r, w // r), dtype=hr.dtype)
    for a in range(r):
        for b in range(r):
            views[a, b] = hr[a::r, b::r]
    return ViewGrid(factor=r, views=views)


def reorganize(grid: ViewGrid) -> np.ndarray:
    """Interleave r*r H x W views into one rH x rW map (inverse of decompose)."""
    r = grid.factor
    _, _, h, w = grid.views.shape
    out = np.empty((r * h, r * w), dtype=grid.views.dtype)
    for a in range(r):
        for b in range(r):
            out[a::r, b::r] = grid.views[a, b]
    return out
