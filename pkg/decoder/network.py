"""
Causal transformer decoder: position t of the output depends on inputs 1..t.

Two input pathways share one trunk: encoder features (projected to the model
width when the widths differ) or embedded action labels.
"""
import numpy as np

from encoder.network import ClassificationHead
from numerics import ops
from numerics.layers import Embedding, FeedForward, LayerNorm, Linear, Module, MultiHeadAttention
from numerics.tensor import Tensor, as_tensor, parameter

from .config import DecoderConfig
from .exceptions import SequenceTooLongError


def causal_mask(T):
    """Boolean T x T matrix; (i, j) is allowed iff j <= i."""
    if T < 1:
        raise ValueError(f"T must be at least 1, got {T}")
    return np.tril(np.ones((T, T), dtype=bool))


class DecoderBlock(Module):
    def __init__(self, dim, heads, hidden, rng, dtype):
        self.attn_norm = LayerNorm(dim, dtype)
        self.attn = MultiHeadAttention(dim, heads, rng, dtype)
        self.mlp_norm = LayerNorm(dim, dtype)
        self.mlp = FeedForward(dim, hidden, rng, dtype)

    def __call__(self, x, mask):
        x = x + self.attn(self.attn_norm(x), mask)
        return x + self.mlp(self.mlp_norm(x))


class CausalDecoder(Module):
    def __init__(self, cfg=None, dtype=np.float64):
        cfg = cfg or DecoderConfig()
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        dim = cfg.model_dim
        if cfg.input_mode == 'labels':
            self.label_embedding = Embedding(cfg.vocab_size, dim, rng, dtype)
        elif cfg.input_dim != dim:
            self.input_proj = Linear(cfg.input_dim, dim, rng, dtype)
        self.pos_embedding = parameter(rng.normal(0.0, 0.02, size=(cfg.max_T, dim)), dtype)
        self.blocks = [DecoderBlock(dim, cfg.heads, cfg.mlp_ratio * dim, rng, dtype) for _ in range(cfg.depth)]
        self.norm = LayerNorm(dim, dtype)
        self.classification_head = ClassificationHead(dim, cfg.vocab_size, rng, dtype)
        self.feature_head = Linear(dim, cfg.input_dim, rng, dtype)

    def trunk_parameters(self):
        """Parameters shared by both input pathways."""
        return [(name, p) for name, p in self.named_parameters()
                if not name.startswith(('label_embedding.', 'input_proj.'))]

    def _run_trunk(self, x):
        batched = x.ndim == 3
        if not batched:
            x = x.reshape(1, *x.shape)
        T = x.shape[1]
        if T > self.cfg.max_T:
            raise SequenceTooLongError(T, self.cfg.max_T)
        x = x + self.pos_embedding[:T]
        mask = causal_mask(T) if self.cfg.causal else None
        for block in self.blocks:
            x = block(x, mask)
        x = self.norm(x)
        return x if batched else x[0]

    def decoder_forward(self, Z):
        """Feature sequence (T, D) or (B, T, D) -> predicted sequence (T, model_dim)."""
        Z = as_tensor(Z, self.pos_embedding.dtype)
        if Z.shape[-2] > self.cfg.max_T:
            raise SequenceTooLongError(Z.shape[-2], self.cfg.max_T)
        x = self.input_proj(Z) if hasattr(self, 'input_proj') else Z
        return self._run_trunk(x)

    def embed_labels(self, labels):
        """Learned lookup; positional embeddings are added by the trunk."""
        return self.label_embedding(np.asarray(labels))

    def forward_labels(self, labels):
        labels = np.asarray(labels)
        if labels.shape[-1] > self.cfg.max_T:
            raise SequenceTooLongError(labels.shape[-1], self.cfg.max_T)
        return self._run_trunk(self.embed_labels(labels))

    def classify(self, P, vocab_size=None):
        """Logits at position t score the action at position t+1."""
        if vocab_size is not None:
            self.classification_head.check_vocabulary(vocab_size)
        return self.classification_head(P)

    def predict_features(self, P):
        """Row t is the prediction of feature t+1."""
        return self.feature_head(P)
