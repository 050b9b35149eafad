"""Exception types shared across the solvers."""


class OverflowGuardError(ArithmeticError):
    """An unregularized growth factor ``e^{sqrt(lambda_p) t}`` would overflow."""

    def __init__(self, message, mode=None):
        super().__init__(message)
        self.mode = mode


class ConvergenceError(RuntimeError):
    """Picard iteration did not reach tolerance within the iteration budget."""

    def __init__(self, message, last_ratio=None, trace=None):
        super().__init__(message)
        self.last_ratio = last_ratio
        self.trace = trace
