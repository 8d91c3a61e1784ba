"""Exception hierarchy shared by all depthsr modules.

The CLI maps these onto process exit codes: UsageError -> 1,
DataError -> 2, NumericalError -> 3.
"""


class DepthSrError(Exception):
    """Base class for all depthsr errors."""


class UsageError(DepthSrError):
    """API misuse: bad arguments, missing cached state, contract violation."""


class ShapeError(UsageError):
    """Operand shapes violate an operation's contract."""


class DataError(DepthSrError):
    """Malformed or unsupported input data (files, manifests)."""


class NumericalError(DepthSrError):
    """Non-finite values or solver failure during computation."""
