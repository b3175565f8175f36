"""Exception types shared across the package."""


class InputError(ValueError):
    """Invalid identifier, malformed structure or violated precondition."""


class BudgetExceeded(RuntimeError):
    """An exhaustive scan would exceed the configured size budget."""

    def __init__(self, message: str, size: int, budget: int):
        super().__init__(message)
        self.size = size
        self.budget = budget


class NumericalIntegrityError(ArithmeticError):
    """A pipeline stage produced a vector whose norm drifted out of tolerance."""
