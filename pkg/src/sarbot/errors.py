"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration, dimensions, or parameters."""


class StateError(RuntimeError):
    """Operation called out of order (e.g. an update before a forward pass)."""


class NumericError(ArithmeticError):
    """A non-finite value surfaced during computation."""

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class OutOfBoundsError(RuntimeError):
    """A sensor or camera sample fell outside the canvas; the trial aborts."""


class CalibrationError(RuntimeError):
    """The loop-gain probe failed to produce a usable measurement."""
