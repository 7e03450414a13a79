"""Exception types shared across the package."""


class DimensionMismatchError(ValueError):
    """Operands have shapes that are incompatible for the requested operation."""


class SingularNormalMatrixError(ArithmeticError):
    """The normal matrix X'WX is numerically singular (condition number above 1e12).

    Raised by the dense kernels instead of silently regularizing; callers
    decide whether to retry with a ridge term.
    """


class InvalidBoundsError(ValueError):
    """gamma_min exceeds gamma_max in a forgetting-factor bound check."""


class ZeroTruthError(ValueError):
    """Relative error is undefined because the reference matrix has zero norm."""


class ConfigError(Exception):
    """An experiment configuration file or option is invalid."""
