class ConfigurationError(ValueError):
    pass


class ClipShapeError(ValueError):
    pass


class VocabularyMismatchError(ValueError):
    """A classification head's width does not match the action vocabulary."""
