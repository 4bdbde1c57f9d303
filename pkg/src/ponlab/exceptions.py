"""Exception taxonomy shared by all ponlab modules."""


class PonlabError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(PonlabError, ValueError):
    """Raised when runtime data violates an operation's preconditions."""


class InvalidConfigError(PonlabError, ValueError):
    """Raised when a configuration value is unusable."""


class NumericError(PonlabError, ArithmeticError):
    """Raised when an iterative computation diverges or produces non-finite values."""


class OutOfRangeError(PonlabError, ValueError):
    """Raised when a requested quantity lies outside the computable range."""
