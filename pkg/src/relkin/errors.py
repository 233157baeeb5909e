class RelkinError(Exception):
    pass


class DomainError(RelkinError, ValueError):
    """Input outside the mathematical domain of an operation."""


class DegenerateCollisionError(RelkinError, ValueError):
    """Collision quantity undefined because ``g(p, q) = 0``."""


class SingularityError(RelkinError, ValueError):
    """A singular kernel term was evaluated at ``g = 0``."""


class ConfigError(RelkinError, ValueError):
    """Invalid sizes, keys or parameters."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UsageError(RelkinError, ValueError):
    """Operator called with incompatible arguments."""


class FitError(RelkinError, ValueError):
    """Decay fit could not be performed on the given samples."""
