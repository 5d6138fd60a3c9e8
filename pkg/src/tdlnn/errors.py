"""Exception types raised across the package."""


class InvalidArgumentError(ValueError):
    """An argument violates an operation's precondition."""


class EmptyChannelError(RuntimeError):
    """No propagation path connects a transmitter to the receiver."""


class DivergenceError(ArithmeticError):
    """An iterative estimator produced non-finite values.

    Attributes:
        epoch: Zero-based iteration (epoch or sample index) where the
            first non-finite value appeared.
    """

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


class SingularDesignError(ArithmeticError):
    """The least-squares design matrix is rank deficient."""

    def __init__(self, message: str, condition: float):
        super().__init__(message)
        self.condition = condition
