"""
Recognition, next-action-prediction and feature-prediction losses.

Cross-entropy terms are summed over positions and averaged over the batch.
"""
from dataclasses import dataclass, field

import numpy as np

from numerics import ops
from numerics.tensor import Tensor


def nap_targets(labels, T=None):
    """
    Split labels (..., T+1) into inputs (positions 1..T) and targets
    (positions 2..T+1): the target at position t is labels[t+1].
    """
    labels = np.asarray(labels)
    length = labels.shape[-1]
    if length < 2:
        raise ValueError(f"Need at least 2 labels for next-action targets, got {length}")
    if T is not None and length != T + 1:
        raise ValueError(f"Expected {T + 1} labels for T={T}, got {length}")
    return labels[..., :-1], labels[..., 1:]


def loss_rec(logits, labels):
    return ops.cross_entropy(logits, labels)


def loss_pre(logits, targets):
    return ops.cross_entropy(logits, targets)


def loss_total(l_rec, l_pre, weights=(1.0, 1.0)):
    """Weighted sum; a zero-weighted term is left out of the graph entirely."""
    w_rec, w_pre = weights
    if w_rec < 0 or w_pre < 0:
        raise ValueError("Loss weights must be non-negative")
    terms = []
    if w_rec:
        terms.append(l_rec if w_rec == 1.0 else ops.mul(l_rec, w_rec))
    if w_pre:
        terms.append(l_pre if w_pre == 1.0 else ops.mul(l_pre, w_pre))
    if not terms:
        return Tensor(0.0)
    total = terms[0]
    for term in terms[1:]:
        total = ops.add(total, term)
    return total


def per_position_nll(logits, targets):
    """Batch-averaged cross-entropy at each position, shape (T,)."""
    logits = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    logp = ops.log_softmax_array(logits)
    picked = np.take_along_axis(logp, np.asarray(targets)[..., None], axis=-1)[..., 0]
    return -picked.reshape(-1, picked.shape[-1]).mean(axis=0)


def feature_prediction_loss(predicted, features):
    """
    For (B, n, D) inputs: sum over t = 2..n of the MSE between the prediction
    made at t-1 and the feature at t, averaged over the batch.
    """
    n = features.shape[1]
    if n < 2:
        raise ValueError("Feature prediction needs at least 2 positions")
    return ops.mul(ops.mse(predicted[:, :-1, :], features[:, 1:, :]), float(n - 1))


@dataclass
class LossReport:
    l_rec: float
    l_pre: float
    l_total: float
    per_position: np.ndarray = field(default=None, repr=False)

    @classmethod
    def from_tensors(cls, l_rec, l_pre, total, per_position=None):
        def value(x):
            return float(x.data) if isinstance(x, Tensor) else float(x)
        return cls(value(l_rec), value(l_pre), value(total), per_position)

    def to_dict(self):
        return {'l_rec': self.l_rec, 'l_pre': self.l_pre, 'l_total': self.l_total}
