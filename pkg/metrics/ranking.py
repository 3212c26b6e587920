"""
Ranking metrics over action scores. Ties are broken by lower class index, so
every hit decision is deterministic.
"""
from dataclasses import dataclass

import numpy as np

from encoder.exceptions import VocabularyMismatchError

MARGINAL_AXES = ('verb', 'noun')


def topk_predictions(scores, k):
    """(M, K) scores -> (M, min(k, K)) class indices, best first."""
    scores = np.atleast_2d(np.asarray(scores))
    k = min(max(int(k), 1), scores.shape[1])
    return np.argsort(-scores, axis=1, kind='stable')[:, :k]


def topk_hits(scores, targets, k):
    targets = np.asarray(targets)
    return np.any(topk_predictions(scores, k) == targets[:, None], axis=1)


def topk_hit(scores, target, k):
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    return bool(topk_hits(np.asarray(scores)[None], np.array([target]), k)[0])


@dataclass(frozen=True)
class EvalBatch:
    scores: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        scores = np.atleast_2d(np.asarray(self.scores, dtype=np.float64))
        targets = np.asarray(self.targets, dtype=np.int64).reshape(-1)
        if len(targets) == 0:
            raise ValueError("Cannot evaluate an empty batch")
        if scores.shape[0] != len(targets):
            raise ValueError(f"{scores.shape[0]} score rows for {len(targets)} targets")
        if targets.min() < 0 or targets.max() >= scores.shape[1]:
            raise ValueError(f"Targets must lie in [0, {scores.shape[1]})")
        object.__setattr__(self, 'scores', scores)
        object.__setattr__(self, 'targets', targets)

    @property
    def num_classes(self):
        return self.scores.shape[1]


def topk_accuracy(scores, targets, k):
    batch = EvalBatch(scores, targets)
    return float(topk_hits(batch.scores, batch.targets, k).mean())


@dataclass
class ClassRecall:
    value: float
    recall: np.ndarray
    counts: np.ndarray
    hits: np.ndarray


def class_mean_topk_recall(scores, targets, k):
    """
    Recall of class c = hits_c / count_c over samples whose target is c; the
    mean runs over classes with at least one sample.
    """
    batch = EvalBatch(scores, targets)
    hit = topk_hits(batch.scores, batch.targets, k)
    counts = np.bincount(batch.targets, minlength=batch.num_classes).astype(np.float64)
    hits = np.bincount(batch.targets, weights=hit.astype(np.float64), minlength=batch.num_classes)
    present = counts > 0
    recall = np.full(batch.num_classes, np.nan)
    recall[present] = hits[present] / counts[present]
    return ClassRecall(float(recall[present].mean()), recall, counts, hits)


def class_mean_top1(scores, targets):
    return class_mean_topk_recall(scores, targets, 1).value


def marginalize(probs, vocab, axis):
    """
    Sum action probabilities per verb (or noun). An unknown column, when
    present, is dropped and the rest renormalized.
    """
    if axis not in MARGINAL_AXES:
        raise ValueError(f"axis must be one of {MARGINAL_AXES}, got '{axis}'")
    probs = np.asarray(probs, dtype=np.float64)
    single = probs.ndim == 1
    probs = np.atleast_2d(probs)
    K = vocab.num_actions
    if probs.shape[1] not in (K, K + 1):
        raise VocabularyMismatchError(f"Scores have {probs.shape[1]} classes; vocabulary has {K} actions")
    if probs.shape[1] > K:
        probs = probs[:, :K]
        total = probs.sum(axis=1, keepdims=True)
        probs = np.divide(probs, total, out=np.full_like(probs, 1.0 / K), where=total > 0)
    owners = np.array([pair[0 if axis == 'verb' else 1] for pair in vocab.actions], dtype=np.int64)
    width = vocab.n_verbs if axis == 'verb' else vocab.n_nouns
    membership = np.zeros((K, width))
    membership[np.arange(K), owners] = 1.0
    out = probs @ membership
    return out[0] if single else out


def marginal_targets(targets, vocab, axis):
    column = 0 if axis == 'verb' else 1
    return np.array([vocab.actions[t][column] for t in np.asarray(targets)], dtype=np.int64)
