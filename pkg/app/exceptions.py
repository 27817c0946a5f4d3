"""Error types raised by the numerical services and the CLI."""
from typing import Iterable, List, Sequence, Tuple


class FracFPEError(Exception):
    """Base class for every error this package raises on purpose."""

    exit_code: int = 2


class DomainError(FracFPEError, ValueError):
    """An argument lies outside the domain of the operation."""


class AccuracyError(FracFPEError, ArithmeticError):
    """A series or quadrature did not reach the requested tolerance."""

    exit_code = 3


class PoleError(FracFPEError, ArithmeticError):
    """Evaluation hit a zero of a denominator.

    Args:
        message: Human readable description.
        locations: The offending points, as (t, v) pairs or bare v values.
    """

    exit_code = 3

    def __init__(self, message: str, locations: Iterable = ()):
        super().__init__(message)
        self.locations: List = list(locations)


class RangeError(FracFPEError, OverflowError):
    """An exponent exceeded the configured cutoff."""

    exit_code = 3


class NumericError(FracFPEError, ArithmeticError):
    """A numerical procedure produced a non-finite or non-positive value."""

    exit_code = 3


class EmptyReportError(FracFPEError):
    """Too many residual points were excluded to report anything."""

    exit_code = 4


class ConfigError(FracFPEError, ValueError):
    """The run configuration is invalid.

    All problems are collected before raising so the user sees them at once.
    """

    exit_code = 2

    def __init__(self, problems: Sequence[str]):
        self.problems: Tuple[str, ...] = tuple(problems)
        super().__init__("; ".join(self.problems) or "invalid configuration")
