"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An argument violates a documented precondition."""


class DegeneratePairError(InvalidInputError):
    pass


class UnsupportedError(InvalidInputError):
    pass


class DomainError(InvalidInputError):
    pass


class InsufficientDataError(InvalidInputError):
    pass


class PreconditionError(InvalidInputError):
    """A run precondition (e.g. unique optimal policy) does not hold."""


class NumericalAbort(FloatingPointError):
    """Integration produced non-finite values."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
