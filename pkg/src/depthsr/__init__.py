"""depthsr: depth map super-resolution via sub-pixel view synthesis,
deeply supervised cascades, multi-scale fusion and TV/IRLS refinement."""

from .depthmap import DepthMap
from .errors import DataError, DepthSrError, NumericalError, ShapeError, UsageError

__all__ = [
    "DepthMap",
    "DepthSrError",
    "UsageError",
    "ShapeError",
    "DataError",
    "NumericalError",
]
