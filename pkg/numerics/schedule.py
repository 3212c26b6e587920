import math
from dataclasses import dataclass


@dataclass(frozen=True)
class LrSchedule:
    """Linear warmup from 0 to ``base_lr``, then half-cosine decay to 0, then 0."""
    base_lr: float
    warmup_epochs: int
    cosine_epochs: int
    steps_per_epoch: int

    def __post_init__(self):
        if self.base_lr < 0 or self.warmup_epochs < 0 or self.cosine_epochs < 0:
            raise ValueError("Schedule lengths and base_lr must be non-negative")
        if self.steps_per_epoch < 1:
            raise ValueError("steps_per_epoch must be at least 1")

    @property
    def warmup_steps(self):
        return self.warmup_epochs * self.steps_per_epoch

    @property
    def cosine_steps(self):
        return self.cosine_epochs * self.steps_per_epoch

    def lr_at_step(self, step):
        return lr_at_step(self, step)


def lr_at_step(schedule, step):
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    warmup = schedule.warmup_steps
    if step < warmup:
        return schedule.base_lr * step / warmup
    offset = step - warmup
    if offset <= schedule.cosine_steps and schedule.cosine_steps > 0:
        u = offset / schedule.cosine_steps
        return schedule.base_lr * 0.5 * (1.0 + math.cos(math.pi * u))
    return 0.0
