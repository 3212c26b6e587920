from dataclasses import asdict, dataclass

from .exceptions import ConfigurationError

INPUT_MODES = ('features', 'labels')


@dataclass(frozen=True)
class DecoderConfig:
    model_dim: int = 64
    depth: int = 4
    heads: int = 4
    max_T: int = 16
    input_dim: int = 32
    vocab_size: int = 21
    mlp_ratio: int = 4
    input_mode: str = 'features'
    causal: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.model_dim % self.heads:
            raise ConfigurationError(f"model_dim {self.model_dim} is not divisible by {self.heads} heads")
        if self.max_T < 1 or self.depth < 1:
            raise ConfigurationError("max_T and depth must be at least 1")
        if self.vocab_size < 1:
            raise ConfigurationError(f"vocab_size must be positive, got {self.vocab_size}")
        if self.input_mode not in INPUT_MODES:
            raise ConfigurationError(f"input_mode must be one of {INPUT_MODES}, got '{self.input_mode}'")

    @classmethod
    def full_scale(cls, **overrides):
        """12 blocks, 12 heads, width 768."""
        values = dict(model_dim=768, depth=12, heads=12, input_dim=768)
        values.update(overrides)
        return cls(**values)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})
