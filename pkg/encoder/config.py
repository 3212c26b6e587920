from dataclasses import asdict, dataclass

from .exceptions import ConfigurationError


@dataclass(frozen=True)
class EncoderConfig:
    frame_size: int = 16
    channels: int = 3
    patch_size: int = 8
    embed_dim: int = 32
    depth: int = 2
    heads: int = 4
    n_frames: int = 4
    mlp_ratio: int = 4
    temporal_attention: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.frame_size % self.patch_size:
            raise ConfigurationError(
                f"frame_size {self.frame_size} is not divisible by patch_size {self.patch_size}"
            )
        if self.embed_dim % self.heads:
            raise ConfigurationError(f"embed_dim {self.embed_dim} is not divisible by {self.heads} heads")
        if self.n_frames < 1 or self.depth < 1:
            raise ConfigurationError("n_frames and depth must be at least 1")

    @property
    def num_patches(self):
        return (self.frame_size // self.patch_size) ** 2

    @property
    def patch_dim(self):
        return self.patch_size * self.patch_size * self.channels

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})
