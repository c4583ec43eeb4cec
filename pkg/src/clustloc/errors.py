"""Exception types shared across the package.

Plain ``ValueError`` is used for ordinary argument validation; the classes
here exist where callers (notably the command line front end) need to tell
data problems, design problems and numerical failures apart.
"""

from __future__ import annotations

__all__ = [
    "ClustlocError",
    "DataFormatError",
    "DesignError",
    "DegenerateDataError",
    "EstimationError",
]


class ClustlocError(Exception):
    """Base class for package-specific failures."""


class DataFormatError(ClustlocError, ValueError):
    """Raised when an input file cannot be parsed into a data set.

    Carries human-readable row/column diagnostics in ``args[0]``.
    """


class DesignError(ClustlocError, ValueError):
    """Raised when a cluster/group design does not support an operation.

    Examples: a two-sample weight request on a one-group design, a
    whole-cluster permutation scheme on clusters that mix groups.
    """


class DegenerateDataError(ClustlocError, ValueError):
    """Raised when data carry no usable information for a requested
    quantity (all observations identical, all residuals zero, ...)."""


class EstimationError(ClustlocError, RuntimeError):
    """Raised when an iterative estimator fails to make progress.

    ``trace`` holds (iteration, residual) pairs for post-mortem use.
    """

    def __init__(self, message: str, trace: list[tuple[int, float]] | None = None):
        super().__init__(message)
        self.trace = trace if trace is not None else []
