"""Conjugate gradient on random Wishart systems: sampling, solvers, limit theory."""

__version__ = "0.1.0"


class ParameterError(ValueError):
    """An argument lies outside the documented domain of an operation."""


class BreakdownError(ArithmeticError):
    """A Krylov iteration met a condition it cannot continue from."""

    def __init__(self, message, sample_index=None):
        super().__init__(message)
        self.sample_index = sample_index
