"""Exception types raised across the package."""


class MVCosineError(Exception):
    pass


class ContractError(MVCosineError, ValueError):
    """An argument violates a documented precondition (shape, range, size)."""


class UnsupportedError(ContractError):
    """The requested case is outside what the routine supports."""


class ConfigError(MVCosineError, ValueError):
    """Invalid experiment configuration. ``line`` is 1-based when known."""

    def __init__(self, message, line=None, key=None):
        self.line = line
        self.key = key
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SolverDivergence(MVCosineError, ArithmeticError):
    """Particle state became non-finite or exceeded the divergence guard."""

    def __init__(self, message, step=None):
        self.step = step
        super().__init__(message)
