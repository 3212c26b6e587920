from dataclasses import dataclass

import numpy as np

from .exceptions import ClipShapeError


@dataclass(frozen=True)
class Clip:
    """n frames of H x W x C pixels in [0, 1]."""
    frames: np.ndarray

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim != 4 or frames.shape[0] < 1:
            raise ClipShapeError(f"Clip frames must be (n>=1, H, W, C), got {frames.shape}")
        if frames.size and (frames.min() < 0.0 or frames.max() > 1.0):
            raise ClipShapeError("Clip pixel values must lie in [0, 1]")
        object.__setattr__(self, 'frames', frames)

    @property
    def n(self):
        return self.frames.shape[0]

    @property
    def shape(self):
        return self.frames.shape


def patchify(frame, patch_size):
    """
    Split an H x W x C frame into non-overlapping patches, scanned row-major,
    each flattened row-major into a (patch_size * patch_size * C,) token.
    """
    return patchify_frames(np.asarray(frame)[None], patch_size)[0]


def patchify_frames(frames, patch_size):
    """(..., H, W, C) -> (..., N, patch_size * patch_size * C)."""
    frames = np.asarray(frames)
    *lead, height, width, channels = frames.shape
    if height % patch_size or width % patch_size:
        raise ClipShapeError(f"Frame {height}x{width} is not divisible by patch size {patch_size}")
    rows, cols = height // patch_size, width // patch_size
    grid = frames.reshape(*lead, rows, patch_size, cols, patch_size, channels)
    k = len(lead)
    order = list(range(k)) + [k, k + 2, k + 1, k + 3, k + 4]
    tokens = grid.transpose(order)
    return tokens.reshape(*lead, rows * cols, patch_size * patch_size * channels)
