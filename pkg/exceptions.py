"""
Error Types
Typed failures raised by the lump library, grouped by the CLI exit code they map to
"""

from typing import Any, Optional

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NO_CONVERGENCE = 3
EXIT_DATA = 4


class LumpError(Exception):
    """Base class; exit_code is what the CLI returns when this escapes a command."""

    exit_code = EXIT_USAGE


# usage / domain (exit 2)

class DomainError(LumpError, ValueError):
    """Parameter outside the admissible range (e.g. beta not in (0, 1/3))."""


class ValidationError(LumpError, ValueError):
    """A computed or configured quantity violates a stated invariant."""


class ShapeError(LumpError, ValueError):
    """Array shape does not match the grid it is attached to."""


class GridMismatchError(LumpError, ValueError):
    """Two fields (or a field and a multiplier bank) live on different grids."""


class UnknownSymbolError(LumpError, KeyError):
    """Requested multiplier symbol is not in the bank."""


class SchemaError(LumpError, ValueError):
    """File schema tag missing or foreign, or its major version is unsupported."""


class UsageError(LumpError, ValueError):
    """Bad command-line or config-file input."""


# non-convergence (exit 3)

class ConvergenceError(LumpError, RuntimeError):
    exit_code = EXIT_NO_CONVERGENCE


class NoConvergenceError(ConvergenceError):
    """Solver hit max_iters; the partial report is attached."""

    def __init__(self, message: str, report: Optional[Any] = None):
        super().__init__(message)
        self.report = report


class CollapseError(ConvergenceError):
    """Iterate norm fell below the solver floor (descent escaped to zero)."""


class DegenerateRayError(ConvergenceError):
    """Quartic part is at or below the quadrature floor; the ray never meets the Nehari set."""


# resolution / data (exit 4)

class ResolutionError(LumpError, ValueError):
    exit_code = EXIT_DATA


class TruncationError(ResolutionError):
    """The spectral cutoff removed more than the allowed share of spectral mass."""

    def __init__(self, message: str, truncated_fraction: float = float("nan")):
        super().__init__(message)
        self.truncated_fraction = truncated_fraction


class NonConvergentTailError(LumpError, RuntimeError):
    """Tail of a lattice sequence is not Cauchy at the requested tolerance."""

    exit_code = EXIT_DATA

    def __init__(self, message: str, result: Optional[Any] = None):
        super().__init__(message)
        self.result = result


class DataFileError(LumpError):
    """Input file missing or unreadable."""

    exit_code = EXIT_USAGE
