"""Exception types raised across the package."""


class ShapeError(ValueError):
    """Input dimensions do not agree with what the operation needs."""


class ContractError(ValueError):
    """A documented precondition was violated (negative penalty, bad rank...)."""


class DegenerateInputError(ValueError):
    """The input is well-formed but the quantity is undefined for it."""


class NumericalError(ArithmeticError):
    """A numerical routine failed to converge.

    Parameters
    ----------
    message : str
        Human-readable description.
    residual : float, optional
        Best residual achieved before giving up.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SizeError(ShapeError):
    """The requested output would be too large to allocate."""
