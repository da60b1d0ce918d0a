"""Exception types shared across the package."""


class DomainError(ValueError):
    """Input violates a documented contract (bad labels, shape mismatch, malformed file)."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite value."""
