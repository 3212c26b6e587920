"""
The differentiable op set used by the encoder, decoder and losses.

All ops take and return ``Tensor`` objects; plain arrays and Python scalars are
wrapped as constants. Reductions use numpy's fixed summation order, so results
do not depend on how a batch is scheduled.
"""
import math

import numpy as np

from .exceptions import DegenerateAttentionError, NumericsError, ShapeMismatchError
from .tensor import Tensor, as_tensor


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _swap_last(array):
    return np.swapaxes(array, -1, -2) if array.ndim >= 2 else array


# ---------------------------------------------------------------- elementwise

def add(a, b):
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)
    out = a.data + b.data

    def backward(grad):
        a.accumulate(_unbroadcast(grad, a.shape))
        b.accumulate(_unbroadcast(grad, b.shape))

    return Tensor.from_op(out, (a, b), backward)


def mul(a, b):
    a = as_tensor(a)
    if not isinstance(b, Tensor) and np.ndim(b) != 0:
        b = as_tensor(b, a.dtype)
    if not isinstance(b, Tensor):
        factor = float(b)

        def scale_backward(grad):
            a.accumulate(grad * factor)

        return Tensor.from_op(a.data * factor, (a,), scale_backward)
    out = a.data * b.data

    def backward(grad):
        a.accumulate(_unbroadcast(grad * b.data, a.shape))
        b.accumulate(_unbroadcast(grad * a.data, b.shape))

    return Tensor.from_op(out, (a, b), backward)


def gelu(x):
    """tanh approximation of GELU."""
    x = as_tensor(x)
    c = math.sqrt(2.0 / math.pi)
    inner = c * (x.data + 0.044715 * x.data ** 3)
    t = np.tanh(inner)
    out = 0.5 * x.data * (1.0 + t)

    def backward(grad):
        d_inner = c * (1.0 + 3 * 0.044715 * x.data ** 2)
        local = 0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t ** 2) * d_inner
        x.accumulate(grad * local)

    return Tensor.from_op(out, (x,), backward)


# ---------------------------------------------------------------- linear algebra

def matmul(a, b):
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)
    out = np.matmul(a.data, b.data)

    def backward(grad):
        if a.requires_grad:
            a.accumulate(_unbroadcast(np.matmul(grad, _swap_last(b.data)), a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(np.matmul(_swap_last(a.data), grad), b.shape))

    return Tensor.from_op(out, (a, b), backward)


# ---------------------------------------------------------------- shape ops

def reshape(x, shape):
    x = as_tensor(x)
    out = x.data.reshape(shape)

    def backward(grad):
        x.accumulate(grad.reshape(x.shape))

    return Tensor.from_op(out, (x,), backward)


def transpose(x, axes=None):
    x = as_tensor(x)
    axes = tuple(axes) if axes is not None else tuple(reversed(range(x.ndim)))
    inverse = tuple(np.argsort(axes))
    out = np.transpose(x.data, axes)

    def backward(grad):
        x.accumulate(np.transpose(grad, inverse))

    return Tensor.from_op(out, (x,), backward)


def _is_basic_index(key):
    parts = key if isinstance(key, tuple) else (key,)
    return all(p is None or p is Ellipsis or isinstance(p, (int, np.integer, slice)) for p in parts)


def getitem(x, key):
    x = as_tensor(x)
    out = x.data[key]
    basic = _is_basic_index(key)

    def backward(grad):
        full = np.zeros_like(x.data)
        if basic:
            full[key] += grad
        else:
            np.add.at(full, key, grad)
        x.accumulate(full)

    return Tensor.from_op(np.array(out), (x,), backward)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(grad):
        for t, start, stop in zip(tensors, bounds[:-1], bounds[1:]):
            index = [slice(None)] * grad.ndim
            index[axis] = slice(start, stop)
            t.accumulate(grad[tuple(index)])

    return Tensor.from_op(out, tensors, backward)


# ---------------------------------------------------------------- reductions

def sum(x, axis=None, keepdims=False):
    x = as_tensor(x)
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def backward(grad):
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        x.accumulate(np.broadcast_to(grad, x.shape))

    return Tensor.from_op(np.asarray(out), (x,), backward)


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / float(count))


# ---------------------------------------------------------------- attention pieces

def masked_softmax(logits, mask=None):
    """
    Softmax over the last axis. ``mask`` (True = allowed) broadcasts against
    the logits; masked entries come out exactly 0.
    """
    logits = as_tensor(logits)
    x = logits.data
    if mask is None:
        allowed = np.ones(x.shape, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        try:
            allowed = np.broadcast_to(mask, x.shape)
        except ValueError as exc:
            raise ShapeMismatchError(f"Mask of shape {mask.shape} does not broadcast to logits {x.shape}") from exc
        if not np.all(allowed.any(axis=-1)):
            raise DegenerateAttentionError("Softmax row has every entry masked")
    # max over allowed entries only, so masked values never touch the result
    shifted = np.where(allowed, x, -np.inf)
    row_max = shifted.max(axis=-1, keepdims=True)
    exps = np.where(allowed, np.exp(shifted - row_max), 0.0)
    probs = exps / exps.sum(axis=-1, keepdims=True)

    def backward(grad):
        dot = np.sum(grad * probs, axis=-1, keepdims=True)
        logits.accumulate(probs * (grad - dot))

    return Tensor.from_op(probs, (logits,), backward)


def layer_norm(x, gamma, beta, eps=1e-5):
    x = as_tensor(x)
    gamma = as_tensor(gamma, x.dtype)
    beta = as_tensor(beta, x.dtype)
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise ShapeMismatchError(f"gamma/beta must have shape ({x.shape[-1]},), got {gamma.shape} and {beta.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered ** 2).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = xhat * gamma.data + beta.data
    width = x.shape[-1]

    def backward(grad):
        lead = tuple(range(grad.ndim - 1))
        gamma.accumulate(np.sum(grad * xhat, axis=lead))
        beta.accumulate(np.sum(grad, axis=lead))
        if x.requires_grad:
            dxhat = grad * gamma.data
            dx = inv_std / width * (
                width * dxhat
                - dxhat.sum(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
            )
            x.accumulate(dx)

    return Tensor.from_op(out, (x, gamma, beta), backward)


def embedding(weight, indices):
    indices = np.asarray(indices)
    if indices.dtype.kind not in 'iu':
        raise NumericsError(f"Embedding indices must be integers, got {indices.dtype}")
    rows = weight.shape[0]
    if indices.size and (indices.min() < 0 or indices.max() >= rows):
        raise NumericsError(f"Embedding index out of range [0, {rows}): min {indices.min()}, max {indices.max()}")
    out = weight.data[indices]

    def backward(grad):
        full = np.zeros_like(weight.data)
        np.add.at(full, indices, grad)
        weight.accumulate(full)

    return Tensor.from_op(out, (weight,), backward)


# ---------------------------------------------------------------- losses

def log_softmax_array(x):
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax_array(x):
    shifted = np.exp(x - x.max(axis=-1, keepdims=True))
    return shifted / shifted.sum(axis=-1, keepdims=True)


def cross_entropy(logits, targets):
    """
    Sum over positions of -log softmax(logits_t)[target_t], averaged over the
    batch. ``logits`` is (T, K) or (B, T, K); ``targets`` is (T,) or (B, T).
    """
    logits = as_tensor(logits)
    targets = np.asarray(targets)
    if logits.shape[:-1] != targets.shape:
        raise ShapeMismatchError(f"Targets shape {targets.shape} does not match logits {logits.shape}")
    classes = logits.shape[-1]
    if targets.dtype.kind not in 'iu':
        raise NumericsError(f"Targets must be integer class indices, got {targets.dtype}")
    if targets.size and (targets.min() < 0 or targets.max() >= classes):
        raise NumericsError(f"Target out of range [0, {classes}): min {targets.min()}, max {targets.max()}")
    batch = logits.shape[0] if logits.ndim == 3 else 1
    logp = log_softmax_array(logits.data)
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    out = -picked.sum() / batch

    def backward(grad):
        probs = np.exp(logp)
        onehot = np.zeros_like(probs)
        np.put_along_axis(onehot, targets[..., None], 1.0, axis=-1)
        logits.accumulate(grad * (probs - onehot) / batch)

    return Tensor.from_op(np.asarray(out), (logits,), backward)


def mse(pred, target):
    pred = as_tensor(pred)
    target = as_tensor(target, pred.dtype)
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"MSE shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    out = np.mean(diff ** 2)

    def backward(grad):
        local = grad * 2.0 * diff / diff.size
        pred.accumulate(local)
        target.accumulate(-local)

    return Tensor.from_op(np.asarray(out), (pred, target), backward)
