"""Exception types shared across the package."""


class DivergenceError(ValueError):
    """Raised when a block-error probability of 1 makes an age metric infinite."""


class InfeasibleError(RuntimeError):
    """Raised when no connection count satisfies the active constraints.

    ``constraint`` names the binding constraint ("C1" power budget,
    "C2" violation-probability bound).
    """

    def __init__(self, message: str, constraint: str):
        super().__init__(message)
        self.constraint = constraint


class NumericError(RuntimeError):
    """Raised when a numeric routine (quadrature, fixed-point iteration)
    fails to reach its accuracy target; the message carries diagnostics."""
