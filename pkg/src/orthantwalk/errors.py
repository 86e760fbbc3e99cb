"""Exception types shared across the package."""


class ValidationError(ValueError):
    """A measure or walk description violates a structural requirement."""


class SolverError(RuntimeError):
    """A numerical solver failed to converge.

    The best iterate seen so far, when available, is attached as
    ``best`` so callers can inspect how far the solve got.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class UnsupportedStructureError(ValueError):
    """The requested construction is outside the supported model class."""


class TruncationError(RuntimeError):
    """A truncated computation cannot reach the requested accuracy."""
