"""Exception hierarchy.

Errors split into two families that the command line maps to distinct exit
codes: :class:`ValidationError` (bad arguments or values, exit 1) and
:class:`DataError` (input data that cannot support the computation, exit 2).
"""


class ParityError(Exception):
    """Base class for all package errors."""


class ValidationError(ParityError, ValueError):
    """An argument or input value violates a documented constraint."""


class DataError(ParityError):
    """Input data is malformed or does not cover what was asked for."""


class ParseError(DataError):
    """A row of an input file could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InsufficientDataError(DataError):
    """Not enough observations for the requested window."""


class DegenerateAssetError(ValidationError):
    """An asset has zero variance or zero adjusted volatility."""

    def __init__(self, message, asset=None):
        self.asset = asset
        super().__init__(message)


class ConditioningError(ValidationError):
    """A covariance matrix is singular or too ill-conditioned to invert."""


class DegenerateFrontierError(ValidationError):
    """Tangency weights cannot be normalised (sum of raw weights is ~0)."""


class ConvergenceError(ParityError):
    """An iterative solver failed to reach its tolerance."""

    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class RedemptionError(ValidationError):
    """A redemption exceeds the fund or the investor balance."""


class AlignmentError(ValidationError):
    """Series passed together do not cover the same dates."""
