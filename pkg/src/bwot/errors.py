"""Exception types shared across the package."""


class BWError(Exception):
    """Base class for all errors raised by bwot."""


class InputError(BWError, ValueError):
    """Malformed or inconsistent user input."""


class DomainError(InputError):
    """A point lies outside the primal or dual domain of a generator."""


class StencilError(DomainError):
    """A finite-difference stencil would leave the domain."""


class ConvergenceError(BWError, RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, violation=None, iterations=None):
        super().__init__(message)
        self.violation = violation
        self.iterations = iterations


class StepError(ConvergenceError):
    """A JKO step could not decrease its objective."""

    def __init__(self, message, diagnostics=None, **kw):
        super().__init__(message, **kw)
        self.diagnostics = diagnostics or {}
