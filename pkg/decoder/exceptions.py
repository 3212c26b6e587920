from encoder.exceptions import ConfigurationError, VocabularyMismatchError

__all__ = ['ConfigurationError', 'SequenceTooLongError', 'VocabularyMismatchError']


class SequenceTooLongError(ValueError):
    def __init__(self, length, max_T):
        self.length = length
        self.max_T = max_T
        super().__init__(f"Sequence of length {length} exceeds the decoder's max_T={max_T}")
