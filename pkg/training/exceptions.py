class TrainingError(RuntimeError):
    """A failure inside the optimization loop, tagged with where it happened."""

    def __init__(self, message, epoch=None, step=None):
        self.epoch = epoch
        self.step = step
        if epoch is not None:
            message = f"{message} (epoch {epoch}, step {step})"
        super().__init__(message)


class NonFiniteLossError(TrainingError):
    pass
