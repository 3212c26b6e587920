import json
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from corpus.markov import gen_markov_chain
from corpus.vocabulary import ActionVocabulary
from encoder.exceptions import VocabularyMismatchError

from .evaluation import compute_report, evaluate, transition_kl
from .ranking import (
    class_mean_top1, class_mean_topk_recall, marginal_targets, marginalize, topk_accuracy, topk_hit,
)
from .reports import MetricReport


def brute_hit(row, target, k):
    beaten_by = sum(1 for j, s in enumerate(row) if s > row[target] or (s == row[target] and j < target))
    return beaten_by < min(k, len(row))


def brute_cm_recall(scores, targets, k):
    per_class = {}
    for row, target in zip(scores, targets):
        per_class.setdefault(int(target), []).append(brute_hit(row, target, k))
    return sum(sum(per_class[c]) / len(per_class[c]) for c in sorted(per_class)) / len(per_class)


class TopkHitTests(SimpleTestCase):
    def test_max_score_hits_every_k(self):
        for k in range(1, 4):
            self.assertTrue(topk_hit([0.1, 0.7, 0.2], 1, k))

    def test_k_equal_to_classes(self):
        self.assertTrue(topk_hit([0.9, 0.05, 0.05], 2, 3))
        self.assertTrue(topk_hit([0.9, 0.05, 0.05], 2, 10))

    def test_hand_sorted(self):
        self.assertTrue(topk_hit([0.2, 0.5, 0.3], 2, 2))
        self.assertFalse(topk_hit([0.2, 0.5, 0.3], 0, 2))

    def test_ties_prefer_lower_index(self):
        self.assertTrue(topk_hit([1.0, 1.0, 1.0], 0, 1))
        self.assertFalse(topk_hit([1.0, 1.0, 1.0], 2, 2))

    def test_k_must_be_positive(self):
        with self.assertRaises(ValueError):
            topk_hit([0.5, 0.5], 0, 0)


class ClassMeanRecallTests(SimpleTestCase):
    def test_perfect_predictor(self):
        targets = np.array([0, 1, 2, 2])
        self.assertEqual(class_mean_topk_recall(np.eye(3)[targets], targets, 1).value, 1.0)

    def test_enumerated_example(self):
        scores = np.array([[0.9, 0.1], [0.2, 0.8], [0.1, 0.9]])
        targets = np.array([0, 0, 1])
        result = class_mean_topk_recall(scores, targets, 1)
        self.assertEqual(result.value, 0.75)
        np.testing.assert_array_equal(result.recall, [0.5, 1.0])

    def test_uniform_random_scores(self):
        rng = np.random.default_rng(0)
        scores = rng.random((100_000, 100))
        targets = rng.integers(100, size=100_000)
        self.assertAlmostEqual(class_mean_topk_recall(scores, targets, 5).value, 0.05, delta=0.01)

    def test_empty_batch(self):
        with self.assertRaises(ValueError):
            class_mean_topk_recall(np.zeros((0, 3)), np.zeros(0, dtype=int), 1)

    def test_matches_brute_force(self):
        for seed in range(200):
            rng = np.random.default_rng(seed)
            K = int(rng.integers(2, 8))
            M = int(rng.integers(1, 30))
            scores = rng.integers(0, 4, size=(M, K)).astype(float)
            targets = rng.integers(K, size=M)
            k = int(rng.integers(1, K + 2))
            self.assertEqual(class_mean_topk_recall(scores, targets, k).value, brute_cm_recall(scores, targets, k))
            self.assertEqual(class_mean_top1(scores, targets), brute_cm_recall(scores, targets, 1))
            expected = sum(brute_hit(r, t, k) for r, t in zip(scores, targets)) / M
            self.assertEqual(topk_accuracy(scores, targets, k), expected)

    def test_invariances(self):
        rng = np.random.default_rng(5)
        scores = rng.normal(size=(50, 6))
        targets = rng.integers(6, size=50)
        for k in range(1, 6):
            self.assertGreaterEqual(topk_accuracy(scores, targets, k + 1), topk_accuracy(scores, targets, k))
            self.assertEqual(topk_accuracy(scores + 3.0, targets, k), topk_accuracy(scores, targets, k))
            doubled = class_mean_topk_recall(np.vstack([scores, scores]), np.concatenate([targets, targets]), k)
            self.assertEqual(doubled.value, class_mean_topk_recall(scores, targets, k).value)

    def test_absent_filler_class_is_ignored(self):
        scores = np.array([[0.6, 0.1, 0.3], [0.1, 0.8, 0.1]])
        result = class_mean_topk_recall(scores, np.array([0, 1]), 1)
        self.assertTrue(np.isnan(result.recall[2]))
        self.assertEqual(result.value, 1.0)


class MarginalizeTests(SimpleTestCase):
    def setUp(self):
        self.vocab = ActionVocabulary(2, 2, ((0, 0), (0, 1), (1, 0)))

    def test_hand_summed(self):
        np.testing.assert_allclose(marginalize([0.5, 0.3, 0.2], self.vocab, 'verb'), [0.8, 0.2], atol=1e-15)
        np.testing.assert_allclose(marginalize([0.5, 0.3, 0.2], self.vocab, 'noun'), [0.7, 0.3], atol=1e-15)

    def test_one_action_per_verb(self):
        vocab = ActionVocabulary(3, 1, ((0, 0), (1, 0), (2, 0)))
        probs = np.array([0.2, 0.5, 0.3])
        np.testing.assert_array_equal(marginalize(probs, vocab, 'verb'), probs)

    def test_sums_to_one(self):
        vocab = ActionVocabulary.synthetic(20)
        probs = np.random.default_rng(0).dirichlet(np.ones(20), size=30)
        np.testing.assert_allclose(marginalize(probs, vocab, 'noun').sum(axis=1), 1.0, atol=1e-12)

    def test_unknown_column_dropped(self):
        vocab = self.vocab.with_unknown()
        np.testing.assert_allclose(marginalize([0.25, 0.15, 0.1, 0.5], vocab, 'verb'), [0.8, 0.2], atol=1e-15)

    def test_matches_brute_force(self):
        for seed in range(200):
            rng = np.random.default_rng(seed)
            vocab = ActionVocabulary.synthetic(int(rng.integers(1, 15)), n_verbs=int(rng.integers(1, 5)))
            probs = rng.dirichlet(np.ones(vocab.num_actions))
            expected = np.zeros(vocab.n_verbs)
            for a, (verb, _) in enumerate(vocab.actions):
                expected[verb] += probs[a]
            np.testing.assert_allclose(marginalize(probs, vocab, 'verb'), expected, rtol=0, atol=1e-15)

    def test_inconsistent_width(self):
        with self.assertRaises(VocabularyMismatchError):
            marginalize(np.ones(7) / 7, self.vocab, 'verb')

    def test_targets(self):
        np.testing.assert_array_equal(marginal_targets([2, 1], self.vocab, 'verb'), [1, 0])


class StaticModel:
    """Returns fixed logits per batch so evaluation can be checked by hand."""

    def __init__(self, logits):
        self.logits = logits

    def anticipation_logits(self, inputs):
        return self.logits[inputs]

    def recognition_logits(self, inputs):
        return np.eye(3)[np.zeros((len(inputs), 2), dtype=int)]


class EvaluateTests(SimpleTestCase):
    def setUp(self):
        self.vocab = ActionVocabulary(2, 2, ((0, 0), (0, 1), (1, 0)))
        self.logits = np.log(np.array([[0.5, 0.3, 0.2], [0.1, 0.2, 0.7], [0.6, 0.3, 0.1], [0.2, 0.7, 0.1]]))

    def batches(self):
        return [(np.array([0, 1]), np.array([0, 2]), np.array([[0, 0], [0, 1]])),
                (np.array([2, 3]), np.array([1, 1]), np.array([[0, 0], [0, 0]]))]

    def test_report_sections(self):
        report = evaluate(StaticModel(self.logits), self.batches(), self.vocab)
        self.assertEqual(set(report.sections), {'action', 'verb', 'noun'})
        self.assertEqual(report['action']['top1'], 0.75)
        self.assertAlmostEqual(report['action']['cm_recall@1'], 2.5 / 3)
        self.assertEqual(report.extras['recognition_top1'], 0.875)

    def test_side_effect_free(self):
        model = StaticModel(self.logits)
        first = evaluate(model, self.batches(), self.vocab).to_json()
        self.assertEqual(first, evaluate(model, self.batches(), self.vocab).to_json())

    def test_chance_level(self):
        rng = np.random.default_rng(0)
        M, K = 20_000, 20
        report = compute_report(rng.normal(size=(M, K)), rng.integers(K, size=M))
        stderr = np.sqrt(0.05 * 0.95 / M)
        self.assertLess(abs(report['action']['top1'] - 0.05), 3 * stderr)

    def test_report_files(self):
        report = evaluate(StaticModel(self.logits), self.batches(), self.vocab)
        with tempfile.TemporaryDirectory() as tmp:
            paths = report.write(tmp)
            data = json.loads(Path(paths[0]).read_text())
            text = Path(paths[1]).read_text()
            self.assertTrue(Path(tmp, 'report_per_class_action.csv').exists())
        self.assertEqual(data['sections']['verb']['count'], 4)
        self.assertIn('cm_recall@5', text.splitlines()[0])
        self.assertEqual(MetricReport.from_json(report.to_json()).sections, report.sections)


class TransitionKlTests(SimpleTestCase):
    def test_exact_rows_give_zero(self):
        chain = gen_markov_chain(6, 2, 0)
        states = np.repeat(np.arange(6), 5)
        logits = np.log(np.where(chain.transitions > 0, chain.transitions, 1e-300))[states]
        self.assertLess(transition_kl(logits, states, chain.transitions, min_count=1), 1e-12)

    def test_uniform_prediction(self):
        chain = gen_markov_chain(4, 1, 0)
        states = np.arange(4)
        self.assertAlmostEqual(transition_kl(np.zeros((4, 4)), states, chain.transitions, min_count=1), np.log(4))

    def test_rare_states_excluded(self):
        chain = gen_markov_chain(4, 1, 0)
        self.assertTrue(np.isnan(transition_kl(np.zeros((4, 4)), np.arange(4), chain.transitions, min_count=2)))
