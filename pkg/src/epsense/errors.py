class ParameterError(ValueError):
    """Invalid dimensions or parameter values."""


class NumericalError(ArithmeticError):
    """A factorization or iterative solve broke down."""


class InfeasibleSystemError(NumericalError):
    """Linearly dependent rows of F carry incompatible measurements."""
