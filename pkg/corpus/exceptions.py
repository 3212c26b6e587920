class AnnotationError(ValueError):
    """A malformed annotation row; ``line`` is the 1-based line in the CSV file."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ReducibleChainError(ValueError):
    pass
