"""Exception hierarchy.

Every error raised by the package derives from :class:`FdSenseError`. The
CLI maps :class:`ConfigError` / :class:`DataFormatError` to exit code 2 and
everything else to exit code 3.
"""


class FdSenseError(Exception):
    """Base class for all package errors."""


class ContractError(FdSenseError, ValueError):
    """Shapes or arguments violate an operation's preconditions."""


class DomainError(FdSenseError, ValueError):
    """A parameter lies outside the mathematical domain of an operation."""


class EvaluationError(FdSenseError, ArithmeticError):
    """A score or objective evaluation produced a non-finite value."""


class NumericalError(FdSenseError, ArithmeticError):
    """A numerical routine failed (e.g. a non-PSD quadratic form)."""


class DataFormatError(FdSenseError, ValueError):
    """An input file is missing, malformed or has the wrong shape."""


class ConfigError(FdSenseError, ValueError):
    """A run configuration is invalid."""
