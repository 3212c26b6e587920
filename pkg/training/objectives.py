"""
What ``fit`` optimizes in each mode: a batch loss over sample indices, a
validation pass and the score used to pick the best checkpoint.
"""
import math

import numpy as np

from metrics.evaluation import evaluate
from numerics.tensor import Tensor, no_grad

from .losses import LossReport, feature_prediction_loss, loss_pre, loss_rec, loss_total, nap_targets


class Objective:
    eval_batch_size = 256

    def __init__(self, model, train_indices, val_indices, cfg):
        self.model = model
        self.train_indices = np.asarray(train_indices)
        self.val_indices = np.asarray(val_indices)
        if len(self.val_indices) == 0:
            self.val_indices = self.train_indices
        self.cfg = cfg

    def trainable_parameters(self):
        return self.model.trainable_parameters(self.cfg.encoder_tuning)

    def batch_loss(self, indices):
        raise NotImplementedError

    def validate(self):
        raise NotImplementedError

    def score(self, metrics):
        """Higher is better."""
        return metrics.get('cm_recall@5', float('nan'))

    def _chunks(self, indices):
        for start in range(0, len(indices), self.eval_batch_size):
            yield indices[start:start + self.eval_batch_size]


class LabelOnlyObjective(Objective):
    def __init__(self, model, data, train_indices, val_indices, cfg, vocab=None):
        super().__init__(model, train_indices, val_indices, cfg)
        self.data = data
        self.vocab = vocab

    def batch_loss(self, indices):
        inputs, targets = nap_targets(self.data[indices])
        l_pre = loss_pre(self.model(inputs), targets)
        total = loss_total(Tensor(0.0), l_pre, (0.0, self.cfg.pre_weight))
        return total, LossReport.from_tensors(0.0, l_pre, total)

    def eval_batches(self, indices):
        for chunk in self._chunks(indices):
            inputs, targets = nap_targets(self.data[chunk])
            yield inputs, targets[:, -1]

    def validate(self):
        report = evaluate(self.model, self.eval_batches(self.val_indices), self.vocab)
        return _flatten(report)


class ARRObjective(Objective):
    def __init__(self, model, data, renderer, train_indices, val_indices, cfg, vocab=None):
        super().__init__(model, train_indices, val_indices, cfg)
        self.data = data
        self.renderer = renderer
        self.vocab = vocab

    def batch_loss(self, indices):
        labels = self.data[indices]
        observed, targets = labels[:, :-1], labels[:, 1:]
        rec_logits, nap_logits = self.model(self.renderer.render_batch(indices, observed))
        l_rec = loss_rec(rec_logits, observed)
        l_pre = loss_pre(nap_logits, targets)
        total = loss_total(l_rec, l_pre, self.cfg.loss_weights)
        return total, LossReport.from_tensors(l_rec, l_pre, total)

    def eval_batches(self, indices):
        for chunk in self._chunks(indices):
            labels = self.data[chunk]
            yield self.renderer.render_batch(chunk, labels[:, :-1]), labels[:, -1], labels[:, :-1]

    def validate(self):
        return _flatten(evaluate(self.model, self.eval_batches(self.val_indices), self.vocab))


class FeaturePredictionObjective(Objective):
    """Regress the next feature; ``features`` is (M, n, D) from the fixed encoder."""

    def __init__(self, model, features, train_indices, val_indices, cfg):
        super().__init__(model, train_indices, val_indices, cfg)
        self.features = np.asarray(features)

    def batch_loss(self, indices):
        features = self.features[indices]
        l_pre = feature_prediction_loss(self.model(features), features)
        return l_pre, LossReport.from_tensors(0.0, l_pre, l_pre)

    def validate(self):
        total = 0.0
        with no_grad():
            for chunk in self._chunks(self.val_indices):
                total += self.batch_loss(chunk)[1].l_total * len(chunk)
        return {'val_loss': total / len(self.val_indices)}

    def score(self, metrics):
        value = metrics['val_loss']
        return -value if math.isfinite(value) else float('-inf')


def _flatten(report):
    metrics = {key: value for key, value in report['action'].items() if key != 'count'}
    metrics.update(report.extras)
    metrics['report'] = report
    return metrics
