class OutputDirectoryError(ValueError):
    """The requested output directory already holds files and --force was not given."""


class ManifestError(ValueError):
    """A run directory's manifest is missing, malformed or no longer matches its inputs."""


class ReproducibilityError(RuntimeError):
    """A re-executed run did not reproduce the metrics recorded in its manifest."""

    def __init__(self, message, differences=None):
        self.differences = differences or []
        if self.differences:
            message = message + ':\n  ' + '\n  '.join(self.differences)
        super().__init__(message)
