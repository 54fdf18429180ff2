"""Exception types raised across the package."""


class StructuralError(ValueError):
    """Shapes, indices or dimensions do not line up."""


class NumericalError(ArithmeticError):
    """A matrix is too ill-conditioned or indefinite to proceed."""


class ConfigError(ValueError):
    """Invalid configuration value; ``path`` names the offending field."""

    def __init__(self, path, message):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


class StateError(RuntimeError):
    """An operation was requested in a state that cannot support it."""
