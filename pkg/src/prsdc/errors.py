"""Exception hierarchy. CLI exit codes hang off the two top-level branches."""


class PrsdcError(Exception):
    """Base class for all package errors."""


class InputError(PrsdcError, ValueError):
    """Malformed or inconsistent input (CLI exit code 2)."""


class NumericalError(PrsdcError, ArithmeticError):
    """A numerical routine failed (CLI exit code 3)."""


class DegenerateGenotypeError(InputError):
    pass


class ConvergenceError(NumericalError):
    """IRLS did not converge; ``trace`` holds the per-iteration history."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class SeparationError(ConvergenceError):
    pass


class QuadratureError(NumericalError):
    pass
