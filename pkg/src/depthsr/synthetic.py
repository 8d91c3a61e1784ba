"""Desk-scale synthetic depth data: piecewise-constant random-rectangle maps."""

from __future__ import annotations

import numpy as np

from .depthmap import DepthMap


def piecewise_constant_map(size: int = 64, num_rects: int = 6,
                           value_range: tuple[float, float] = (10.0, 255.0),
                           rng: np.random.Generator | None = None) -> DepthMap:
    """A size x size map: a constant background overlaid with axis-aligned
    rectangles at random depths. Mimics fronto-parallel planar scenes."""
    rng = rng or np.random.default_rng()
    lo, hi = value_range
    values = np.full((size, size), rng.uniform(lo, hi))
    for _ in range(num_rects):
        h = int(rng.integers(size // 8, size // 2))
        w = int(rng.integers(size // 8, size // 2))
        r = int(rng.integers(0, size - h))
        c = int(rng.integers(0, size - w))
        values[r:r + h, c:c + w] = rng.uniform(lo, hi)
    return DepthMap(values, value_range=(0.0, 255.0))


def make_dataset(count: int = 200, size: int = 64, seed: int = 0) -> list[DepthMap]:
    rng = np.random.default_rng(seed)
    return [piecewise_constant_map(size, rng=rng) for _ in range(count)]
