"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes (see cli.py); library callers
can catch the base class or the specific subtype.
"""


class SendwhenError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(SendwhenError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class SchemaError(SendwhenError, ValueError):
    """A feature vector, model, or file does not match the declared schema."""


class ConfigError(SendwhenError, ValueError):
    """A configuration file or option set is invalid."""


class DataError(SendwhenError, ValueError):
    """Input data is malformed or insufficient for the requested operation."""


class NumericalError(SendwhenError, ArithmeticError):
    """A numerical procedure produced non-finite values or failed to converge."""


class ConvergenceError(NumericalError):
    """An iterative fit stopped without meeting its convergence tolerance."""
