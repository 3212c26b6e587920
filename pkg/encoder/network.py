"""
Toy factorized space-time attention encoder and the recognition head.

Each clip is encoded on its own: tokens never attend across clips, so row t of
a feature sequence depends on clip t only.
"""
import numpy as np

from numerics import ops
from numerics.layers import FeedForward, LayerNorm, Linear, Module, MultiHeadAttention
from numerics.tensor import Tensor, parameter

from .clips import Clip, patchify_frames
from .config import EncoderConfig
from .exceptions import ClipShapeError, VocabularyMismatchError


class SpaceTimeBlock(Module):
    """
    Pre-norm block: temporal attention (tokens at the same spatial position
    attend over the n frames), spatial attention (within a frame over N+1
    tokens), then a feed-forward sublayer. The temporal output projection is
    zero-initialized, so a fresh block behaves like a spatial-only block.
    """

    def __init__(self, cfg, rng, dtype):
        dim = cfg.embed_dim
        self.temporal_norm = LayerNorm(dim, dtype)
        self.temporal_attn = MultiHeadAttention(dim, cfg.heads, rng, dtype, zero_init_out=True)
        self.spatial_norm = LayerNorm(dim, dtype)
        self.spatial_attn = MultiHeadAttention(dim, cfg.heads, rng, dtype)
        self.mlp_norm = LayerNorm(dim, dtype)
        self.mlp = FeedForward(dim, cfg.mlp_ratio * dim, rng, dtype)

    def __call__(self, x, temporal=True):
        batch, frames, tokens, dim = x.shape
        if temporal:
            xt = x.transpose(0, 2, 1, 3).reshape(batch * tokens, frames, dim)
            ht = self.temporal_attn(self.temporal_norm(xt))
            x = x + ht.reshape(batch, tokens, frames, dim).transpose(0, 2, 1, 3)
        xs = x.reshape(batch * frames, tokens, dim)
        x = x + self.spatial_attn(self.spatial_norm(xs)).reshape(batch, frames, tokens, dim)
        return x + self.mlp(self.mlp_norm(x))


class ToyVideoEncoder(Module):
    """Maps clips (n x H x W x C) to D-dimensional features."""

    def __init__(self, cfg=None, dtype=np.float64):
        cfg = cfg or EncoderConfig()
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        dim = cfg.embed_dim
        self.patch_embed = Linear(cfg.patch_dim, dim, rng, dtype)
        self.cls_token = parameter(rng.normal(0.0, 0.02, size=dim), dtype)
        self.spatial_pos = parameter(rng.normal(0.0, 0.02, size=(cfg.num_patches + 1, dim)), dtype)
        self.temporal_pos = parameter(rng.normal(0.0, 0.02, size=(cfg.n_frames, dim)), dtype)
        self.blocks = [SpaceTimeBlock(cfg, rng, dtype) for _ in range(cfg.depth)]
        self.norm = LayerNorm(dim, dtype)

    @property
    def feature_dim(self):
        return self.cfg.embed_dim

    def _check(self, clips):
        cfg = self.cfg
        expected = (cfg.frame_size, cfg.frame_size, cfg.channels)
        if clips.ndim != 5 or tuple(clips.shape[2:]) != expected:
            raise ClipShapeError(f"Expected clips of shape (B, n, {expected[0]}, {expected[1]}, {expected[2]}), got {clips.shape}")
        if not 1 <= clips.shape[1] <= cfg.n_frames:
            raise ClipShapeError(f"Clip has {clips.shape[1]} frames; encoder supports 1..{cfg.n_frames}")

    def __call__(self, clips):
        """(B, n, H, W, C) array -> (B, D) Tensor."""
        clips = np.asarray(clips, dtype=self.cls_token.dtype)
        self._check(clips)
        batch, frames = clips.shape[:2]
        dim = self.cfg.embed_dim
        tokens = self.patch_embed(Tensor(patchify_frames(clips, self.cfg.patch_size)))
        cls = ops.add(np.zeros((batch, frames, 1, dim), dtype=clips.dtype), self.cls_token)
        x = ops.concat([cls, tokens], axis=2)
        x = x + self.spatial_pos
        x = x + self.temporal_pos[:frames].reshape(frames, 1, dim)
        for block in self.blocks:
            x = block(x, temporal=self.cfg.temporal_attention)
        x = self.norm(x)
        return ops.mean(x[:, :, 0, :], axis=1)

    def encode_clip(self, clip):
        frames = clip.frames if isinstance(clip, Clip) else np.asarray(clip)
        return self(frames[None])[0]

    def encode_sequence(self, clips):
        """
        T clips (a list of Clips or a (T, n, H, W, C) array, or a batch of
        sequences (B, T, n, H, W, C)) -> feature sequence Z of shape (T, D)
        or (B, T, D).
        """
        if isinstance(clips, (list, tuple)):
            shapes = {np.shape(c.frames if isinstance(c, Clip) else c) for c in clips}
            if len(shapes) != 1:
                raise ClipShapeError(f"All clips in a sequence must share one shape, got {sorted(shapes)}")
            clips = np.stack([c.frames if isinstance(c, Clip) else np.asarray(c) for c in clips])
        clips = np.asarray(clips)
        if clips.ndim == 5:
            return self(clips)
        if clips.ndim != 6:
            raise ClipShapeError(f"Expected (T, n, H, W, C) or (B, T, n, H, W, C), got {clips.shape}")
        batch, steps = clips.shape[:2]
        features = self(clips.reshape(batch * steps, *clips.shape[2:]))
        return features.reshape(batch, steps, self.cfg.embed_dim)

    def adapter_parameters(self):
        """Parameters updated when only the adapters are tuned."""
        return [(name, p) for name, p in self.named_parameters()
                if '.temporal_' in name or name.startswith('norm.')]


class ClassificationHead(Module):
    """Affine map per position; logits only, losses apply the softmax."""

    def __init__(self, in_features, num_classes, rng, dtype=np.float64):
        self.num_classes = num_classes
        self.linear = Linear(in_features, num_classes, rng, dtype)

    def check_vocabulary(self, vocab_size):
        if vocab_size != self.num_classes:
            raise VocabularyMismatchError(
                f"Head has {self.num_classes} classes but the vocabulary has {vocab_size}"
            )

    def __call__(self, features):
        return self.linear(features)


def recognition_head(Z, head, vocab_size=None):
    """Recognition logits (T x K) for a feature sequence Z (T x D)."""
    if vocab_size is not None:
        head.check_vocabulary(vocab_size)
    return head(Z)
