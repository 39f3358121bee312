"""Exception hierarchy shared by all modules."""


class DpcError(Exception):
    """Base class for errors raised by implicitdpc."""


class PreconditionError(DpcError, ValueError):
    """An input violates an operation's documented precondition."""


class DimensionError(PreconditionError):
    """Array shapes do not match."""


class NumericalError(DpcError, ArithmeticError):
    """A factorization or iteration failed numerically."""
