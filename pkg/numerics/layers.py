"""
Parameter containers and the transformer building blocks shared by the
encoder and the decoder.
"""
import math

import numpy as np

from . import ops
from .exceptions import CheckpointError, ShapeMismatchError
from .tensor import Tensor, parameter


class Module:
    """Holds parameters (Tensors with requires_grad) and child modules as attributes."""

    def named_parameters(self, prefix=''):
        for name, value in vars(self).items():
            path = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(path + '.')
            elif isinstance(value, (list, tuple)):
                for index, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{index}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def num_parameters(self):
        return int(np.sum([p.size for p in self.parameters()]))

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state, strict=True):
        """
        Copy arrays into parameters. Every shape mismatch (and, when strict,
        every missing or unexpected key) is reported in a single error.
        """
        own = dict(self.named_parameters())
        mismatches = []
        for name, array in state.items():
            if name not in own:
                if strict:
                    mismatches.append(f"unexpected key '{name}'")
                continue
            if tuple(own[name].shape) != tuple(np.shape(array)):
                mismatches.append(f"'{name}': expected {tuple(own[name].shape)}, got {tuple(np.shape(array))}")
        if strict:
            mismatches.extend(f"missing key '{name}'" for name in own if name not in state)
        if mismatches:
            raise CheckpointError("Checkpoint does not match model", mismatches)
        for name, array in state.items():
            if name in own:
                own[name].data = np.array(array, dtype=own[name].dtype, copy=True)

    def astype(self, dtype):
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self


class Linear(Module):
    def __init__(self, in_features, out_features, rng, dtype=np.float64, zero_init=False, std=None):
        self.in_features = in_features
        self.out_features = out_features
        if zero_init:
            weight = np.zeros((in_features, out_features))
        else:
            std = in_features ** -0.5 if std is None else std
            weight = rng.normal(0.0, std, size=(in_features, out_features))
        self.weight = parameter(weight, dtype)
        self.bias = parameter(np.zeros(out_features), dtype)

    def __call__(self, x):
        if x.shape[-1] != self.in_features:
            raise ShapeMismatchError(f"Linear expects last dim {self.in_features}, got {x.shape[-1]}")
        return ops.add(ops.matmul(x, self.weight), self.bias)


class LayerNorm(Module):
    def __init__(self, dim, dtype=np.float64, eps=1e-5):
        self.eps = eps
        self.gamma = parameter(np.ones(dim), dtype)
        self.beta = parameter(np.zeros(dim), dtype)

    def __call__(self, x):
        return ops.layer_norm(x, self.gamma, self.beta, self.eps)


class Embedding(Module):
    def __init__(self, num_embeddings, dim, rng, dtype=np.float64, std=0.02):
        self.num_embeddings = num_embeddings
        self.weight = parameter(rng.normal(0.0, std, size=(num_embeddings, dim)), dtype)

    def __call__(self, indices):
        return ops.embedding(self.weight, indices)


class MultiHeadAttention(Module):
    """
    Self-attention over the middle axis of an (M, L, D) input. ``zero_init_out``
    starts the output projection at zero so the sublayer is a no-op residual.
    """

    def __init__(self, dim, heads, rng, dtype=np.float64, zero_init_out=False):
        if dim % heads:
            raise ShapeMismatchError(f"Model width {dim} is not divisible by {heads} heads")
        self.dim = dim
        self.heads = heads
        self.qkv = Linear(dim, 3 * dim, rng, dtype)
        self.proj = Linear(dim, dim, rng, dtype, zero_init=zero_init_out)

    def __call__(self, x, mask=None):
        batch, length, dim = x.shape
        head_dim = dim // self.heads
        qkv = self.qkv(x).reshape(batch, length, 3, self.heads, head_dim)
        qkv = qkv.transpose(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        scores = ops.mul(ops.matmul(q, k.transpose(0, 1, 3, 2)), 1.0 / math.sqrt(head_dim))
        weights = ops.masked_softmax(scores, mask)
        mixed = ops.matmul(weights, v).transpose(0, 2, 1, 3).reshape(batch, length, dim)
        return self.proj(mixed)


class FeedForward(Module):
    def __init__(self, dim, hidden, rng, dtype=np.float64):
        self.fc1 = Linear(dim, hidden, rng, dtype)
        self.fc2 = Linear(hidden, dim, rng, dtype)

    def __call__(self, x):
        return self.fc2(ops.gelu(self.fc1(x)))
