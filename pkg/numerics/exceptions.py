class NumericsError(ValueError):
    """Base class for invalid inputs to the tensor core."""


class ShapeMismatchError(NumericsError):
    pass


class DegenerateAttentionError(NumericsError):
    """A softmax row had every entry masked out."""


class NonFiniteError(RuntimeError):
    """An operation produced NaN or infinite values."""


class NonFiniteGradientError(RuntimeError):
    """Raised by the optimizer; the message names the offending parameter."""

    def __init__(self, name):
        self.name = name
        super().__init__(f"Non-finite gradient for parameter '{name}'")


class CheckpointError(ValueError):
    """Container file is malformed or does not match the expected shapes."""

    def __init__(self, message, mismatches=None):
        self.mismatches = list(mismatches or [])
        if self.mismatches:
            message = message + ': ' + '; '.join(self.mismatches)
        super().__init__(message)
