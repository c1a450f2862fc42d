"""Exception hierarchy shared by every module.

Each class carries the CLI exit code it maps to so that the command-line layer
never needs a lookup table of its own.
"""


class BMTestError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(BMTestError, ValueError):
    """Invalid parameters or configuration."""

    exit_code = 2


class DataError(BMTestError, ValueError):
    """Malformed or unusable input data."""

    exit_code = 3

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptySeriesError(DataError):
    """No increment could be formed (stride longer than every day)."""


class DegenerateStatisticError(BMTestError, ArithmeticError):
    """A ratio or variance has a zero ingredient."""

    exit_code = 4

    def __init__(self, message, factor=None, span=None):
        if span is not None:
            message = f"{message} (span {span})"
        super().__init__(message)
        self.factor = factor
        self.span = span


class DegenerateCutoffError(DegenerateStatisticError):
    """Volatility calibration found no usable increment on a span."""


class RateConditionError(ConfigError):
    """Tuning parameters fall outside the admissible window."""

    def __init__(self, check):
        super().__init__(check.explanation)
        self.check = check


class CalibrationError(BMTestError, RuntimeError):
    """Root finding for a jump scale failed."""

    exit_code = 2


class NumericalError(BMTestError, ArithmeticError):
    """A series or quadrature did not converge within budget."""
