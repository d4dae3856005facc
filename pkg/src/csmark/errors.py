"""Exception hierarchy.

Every error carries a short machine-readable ``category`` which the CLI
reports on failure.
"""


class CSMarkError(Exception):
    category = "error"


class InvalidArgumentError(CSMarkError, ValueError):
    category = "invalid-argument"


class DomainError(CSMarkError, ValueError):
    category = "domain"


class DataValidationError(CSMarkError, ValueError):
    category = "data-validation"


class NumericalError(CSMarkError, ArithmeticError):
    category = "numerical"


class ImputationError(NumericalError):
    """Raised when an observation has zero probability under the current weights."""

    category = "imputation"


class ParseError(CSMarkError, ValueError):
    category = "parse"
