import enum
from dataclasses import asdict, dataclass

from encoder.exceptions import ConfigurationError


class TrainingMode(str, enum.Enum):
    LABEL_ONLY = 'label_only'
    PRETRAIN = 'pretrain'
    END_TO_END = 'end_to_end'

    @classmethod
    def parse(cls, value):
        return cls(str(value).replace('-', '_').lower())


class EncoderTuning(str, enum.Enum):
    FULL = 'full'
    ADAPTERS = 'adapters'
    FROZEN = 'frozen'


@dataclass(frozen=True)
class TrainConfig:
    mode: TrainingMode = TrainingMode.LABEL_ONLY
    epochs: int = 50
    warmup_epochs: int = 20
    cosine_epochs: int = 30
    lr: float = 1e-4
    weight_decay: float = 4e-5
    batch_size: int = 8
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    rec_weight: float = 1.0
    pre_weight: float = 1.0
    val_fraction: float = 0.1
    encoder_tuning: EncoderTuning = EncoderTuning.FULL
    pretrain_frames: int = 8
    pretrain_interval: int = 1
    dtype: str = 'float64'
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'mode', TrainingMode.parse(self.mode))
        object.__setattr__(self, 'encoder_tuning', EncoderTuning(self.encoder_tuning))
        if self.epochs < 0:
            raise ConfigurationError(f"epochs must be >= 0, got {self.epochs}")
        # epochs == 0 evaluates the initialized model, so the schedule is not checked
        if self.epochs and self.warmup_epochs + self.cosine_epochs > self.epochs:
            raise ConfigurationError(
                f"warmup_epochs + cosine_epochs = {self.warmup_epochs + self.cosine_epochs} exceeds epochs {self.epochs}"
            )
        if not self.lr > 0:
            raise ConfigurationError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be at least 1")
        if self.rec_weight < 0 or self.pre_weight < 0:
            raise ConfigurationError("Loss weights must be non-negative")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigurationError(f"val_fraction must lie in [0, 1), got {self.val_fraction}")
        if self.pretrain_frames < 2:
            raise ConfigurationError("Pre-training needs at least 2 frames per sequence")
        if self.pretrain_interval < 1:
            raise ConfigurationError("pretrain_interval must be at least 1")
        if self.dtype not in ('float64', 'float32'):
            raise ConfigurationError(f"dtype must be float64 or float32, got '{self.dtype}'")

    @property
    def loss_weights(self):
        return (self.rec_weight, self.pre_weight)

    def to_dict(self):
        data = asdict(self)
        data['mode'] = self.mode.value
        data['encoder_tuning'] = self.encoder_tuning.value
        return data

    @classmethod
    def from_dict(cls, data):
        return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})
