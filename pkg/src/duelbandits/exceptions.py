"""Exception types shared across the package."""


class NumericFailure(ArithmeticError):
    """A numerical routine detected corrupted or non-finite state.

    Raised when a quantity that is positive by construction (a Sherman-Morrison
    denominator, a quadratic form in a PD matrix, a CG curvature term) comes out
    non-positive or non-finite, or when a bracketing search fails to converge.
    """


class ConfigError(ValueError):
    """A configuration key is unknown, has the wrong type, or is out of range."""
