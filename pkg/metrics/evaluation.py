"""Model evaluation: anticipation metrics on the final position, plus diagnostics."""
import logging

import numpy as np

from corpus.exceptions import ReducibleChainError
from corpus.markov import bayes_topk_recall
from numerics.ops import log_softmax_array, softmax_array
from numerics.tensor import no_grad

from .ranking import class_mean_topk_recall, marginal_targets, marginalize, topk_accuracy
from .reports import MetricReport, per_class_table

logger = logging.getLogger(__name__)

DEFAULT_KS = (1, 5)


def section_metrics(scores, targets, ks=DEFAULT_KS):
    values = {'count': int(len(targets))}
    recalls = {}
    for k in ks:
        values[f"top{k}"] = topk_accuracy(scores, targets, k)
        recalls[f"recall@{k}"] = class_mean_topk_recall(scores, targets, k)
        values[f"cm_recall@{k}"] = recalls[f"recall@{k}"].value
    if 1 in ks:
        values['cm_top1'] = recalls['recall@1'].value
    return values, per_class_table(recalls)


def compute_report(logits, targets, vocab=None, ks=DEFAULT_KS):
    """
    MetricReport for (M, K) logits against M target ids. Verb and noun
    sections are added when ``vocab`` carries (verb, noun) pairs.
    """
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    sections, tables = {}, {}
    sections['action'], tables['action'] = section_metrics(logits, targets, ks)
    if vocab is not None and vocab.num_actions and vocab.n_verbs and vocab.n_nouns:
        probs = softmax_array(logits)
        for axis in ('verb', 'noun'):
            sections[axis], tables[axis] = section_metrics(
                marginalize(probs, vocab, axis), marginal_targets(targets, vocab, axis), ks,
            )
    return MetricReport(sections=sections, per_class=tables)


def transition_kl(logits, states, transitions, min_count=1000):
    """
    Mean KL(row of a_t || softmax(logits_t)) over positions whose current
    state a_t occurs at least ``min_count`` times. Only the first K logit
    columns are compared (an unknown column is dropped and renormalized).
    """
    K = transitions.shape[0]
    logp = log_softmax_array(np.asarray(logits, dtype=np.float64)[..., :K]).reshape(-1, K)
    states = np.asarray(states).reshape(-1)
    counts = np.bincount(states, minlength=K)
    keep = counts[states] >= min_count
    if not np.any(keep):
        return float('nan')
    rows = transitions[states[keep]]
    logq = logp[keep]
    support = rows > 0
    terms = np.where(support, rows * (np.log(np.where(support, rows, 1.0)) - logq), 0.0)
    return float(terms.sum(axis=1).mean())


def evaluate(model, batches, vocab=None, ks=DEFAULT_KS):
    """
    Score the anticipation target of every sample. ``batches`` yields
    ``(inputs, targets)`` or ``(inputs, targets, observed_labels)``; the model
    provides ``anticipation_logits(inputs)`` and, for video inputs,
    ``recognition_logits(inputs)``.
    """
    logits, targets = [], []
    rec_hits = []
    with no_grad():
        for batch in batches:
            inputs, target = batch[0], batch[1]
            logits.append(model.anticipation_logits(inputs))
            targets.append(np.asarray(target))
            if len(batch) > 2 and batch[2] is not None and hasattr(model, 'recognition_logits'):
                rec = model.recognition_logits(inputs)
                rec_hits.append(rec.argmax(axis=-1) == np.asarray(batch[2]))
    report = compute_report(np.concatenate(logits), np.concatenate(targets), vocab, ks)
    if rec_hits:
        report.extras['recognition_top1'] = float(np.concatenate([h.ravel() for h in rec_hits]).mean())
    logger.debug(f"Evaluated {report['action']['count']} samples")
    return report


def add_chain_diagnostics(report, logits, states, chain, ks=DEFAULT_KS, min_count=1000):
    """
    For label-only models on Markov sequences: the transition KL over all
    positions and the optimal predictor's class-mean recall as a reference.
    """
    report.extras['transition_kl'] = transition_kl(logits, states, chain.transitions, min_count)
    for k in ks:
        try:
            report.extras[f"bayes_cm_recall@{k}"] = bayes_topk_recall(chain, k).class_mean
        except ReducibleChainError as exc:
            logger.warning(f"No optimal recall@{k} reference: {exc}")
    return report
