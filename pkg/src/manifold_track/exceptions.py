"""Exception types raised across the package."""


class InvalidArgumentError(ValueError):
    """An input violates a documented precondition."""


class SingularRetractionError(ArithmeticError):
    """``x + v`` is rank deficient or orientation reversing, so no Q-factor in SO(3) exists."""


class NumericalError(ArithmeticError):
    """A factorization or iterative repair failed."""
