"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when an operation receives arguments outside its contract."""


class InternalLogicError(RuntimeError):
    """Raised when a caller violates an internal routing precondition."""


class SolverFailureError(RuntimeError):
    """Raised when a numerical solver breaks down; carries diagnostics."""


class NoSlackError(ValueError):
    """Raised when no strictly safe policy exists (threshold >= best utility)."""


class UnsupportedEnvironmentError(ValueError):
    """Raised when an algorithm is asked to run on an environment class it does not support."""
