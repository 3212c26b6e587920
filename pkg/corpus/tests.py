import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from .annotations import AnnotationRecord, parse_annotations, save_annotations
from .exceptions import AnnotationError, ReducibleChainError
from .markov import (
    MarkovChainSpec, bayes_topk_recall, bigram_frequencies, gen_label_sequences, gen_markov_chain,
    monte_carlo_topk_recall, stationary_distribution,
)
from .rendering import nearest_template_classify, render_clip, render_templates, template_correlations
from .sampling import GapStrategy, SamplingConfig, build_samples, clip_windows, label_at, windows_tile
from .seeding import derive_seed, index_hash
from .storage import SyntheticCorpus, load_corpus, save_corpus
from .timelines import gen_annotated_timelines
from .vocabulary import ActionVocabulary

HEADER = 'video_id,start_s,stop_s,verb_id,noun_id\n'


def record(video, start, stop, action):
    return AnnotationRecord(video, start, stop, action % 5, action // 5, action)


class ParseAnnotationsTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def write(self, text):
        path = Path(self.tmp.name) / 'annotations.csv'
        path.write_text(text)
        return path

    def test_header_only(self):
        records, vocab = parse_annotations(self.write(HEADER))
        self.assertEqual(records, [])
        self.assertEqual(vocab.num_actions, 0)

    def test_fixture_fields(self):
        path = self.write(HEADER + 'P01_02,4.5,6.0,3,7\nP01_01,1.0,2.5,0,2\nP01_01,0.0,1.0,3,7\n')
        records, vocab = parse_annotations(path)
        self.assertEqual(vocab.actions, ((0, 2), (3, 7)))
        self.assertEqual(records, [
            AnnotationRecord('P01_01', 0.0, 1.0, 3, 7, 1),
            AnnotationRecord('P01_01', 1.0, 2.5, 0, 2, 0),
            AnnotationRecord('P01_02', 4.5, 6.0, 3, 7, 1),
        ])

    def test_overlapping_segments_are_kept(self):
        records, _ = parse_annotations(self.write(HEADER + 'v,2.0,5.0,1,1\nv,1.0,3.0,0,0\n'))
        self.assertEqual([r.start_s for r in records], [1.0, 2.0])

    def test_action_ids_are_read(self):
        path = self.write('video_id,start_s,stop_s,verb_id,noun_id,action_id\nv,0,1,2,2,1\nv,1,2,0,1,0\n')
        records, vocab = parse_annotations(path)
        self.assertEqual(vocab.actions, ((0, 1), (2, 2)))
        self.assertEqual([r.action_id for r in records], [1, 0])

    def test_sparse_action_ids(self):
        path = self.write('video_id,start_s,stop_s,verb_id,noun_id,action_id\nv,0,1,2,2,3\n')
        with self.assertRaises(AnnotationError):
            parse_annotations(path)

    def test_malformed_row_reports_line(self):
        with self.assertRaises(AnnotationError) as ctx:
            parse_annotations(self.write(HEADER + 'v,0,1,0,0\nv,abc,2,0,0\n'))
        self.assertEqual(ctx.exception.line, 3)

    def test_start_not_before_stop(self):
        with self.assertRaises(AnnotationError) as ctx:
            parse_annotations(self.write(HEADER + 'v,2.0,2.0,0,0\n'))
        self.assertEqual(ctx.exception.line, 2)

    def test_missing_column(self):
        with self.assertRaises(AnnotationError):
            parse_annotations(self.write('video_id,start_s,stop_s,verb_id\nv,0,1,0\n'))

    def test_save_and_parse_against_known_vocabulary(self):
        vocab = ActionVocabulary.synthetic(20)
        records = [record('a', 0.1, 0.7, 13), record('a', 0.7, 1.3000000000000003, 2)]
        path = save_annotations(records, Path(self.tmp.name) / 'out.csv')
        parsed, same = parse_annotations(path, vocab)
        self.assertIs(same, vocab)
        self.assertEqual(parsed, records)


class LabelAtTests(SimpleTestCase):
    def setUp(self):
        self.vocab = ActionVocabulary.synthetic(10).with_unknown()
        self.records = [record('v', 5.0, 7.0, 3), record('v', 8.0, 9.0, 7)]

    def test_inside_segment(self):
        for strategy in GapStrategy:
            self.assertEqual(label_at(self.records, 8.5, strategy, self.vocab, np.random.default_rng(0)), 7)

    def test_gap_after_action(self):
        self.assertEqual(label_at(self.records, 7.5, GapStrategy.UNKNOWN, self.vocab), 10)
        self.assertEqual(label_at(self.records, 7.5, GapStrategy.PREVIOUS, self.vocab), 3)

    def test_leading_gap_previous_falls_back_to_unknown(self):
        self.assertEqual(label_at(self.records, 1.0, 'previous', self.vocab), 10)

    def test_random_stays_in_vocabulary(self):
        rng = np.random.default_rng(1)
        draws = {label_at(self.records, 0.5, GapStrategy.RANDOM, self.vocab, rng) for _ in range(300)}
        self.assertEqual(draws, set(range(10)))

    def test_latest_start_wins_overlap(self):
        records = [record('v', 0.0, 10.0, 1), record('v', 4.0, 6.0, 2)]
        self.assertEqual(label_at(records, 5.0, GapStrategy.UNKNOWN, self.vocab), 2)
        self.assertEqual(label_at(records, 7.0, GapStrategy.UNKNOWN, self.vocab), 1)


class BuildSamplesTests(SimpleTestCase):
    def setUp(self):
        self.vocab = ActionVocabulary.synthetic(10)

    def test_window_layout(self):
        windows = clip_windows(100.0, 1.0, 8)
        self.assertEqual(windows[0], (92.0, 93.0))
        self.assertEqual(windows[-1], (99.0, 100.0))
        self.assertEqual(clip_windows(100.0, 1.0, 1), ((99.0, 100.0),))

    def test_windows_tile_observation_span(self):
        for tau_a, T, start in [(1.0, 8, 100.0), (0.3, 7, 12.345), (2.5, 3, 40.1)]:
            self.assertTrue(windows_tile(clip_windows(start, tau_a, T), start, tau_a * T))

    def test_skip_threshold_includes_anticipation_gap(self):
        # windows of a target at 2.5 would fit from 0.5s, but it is still skipped
        records = [record('v', 2.5, 2.8, 1), record('v', 3.0, 3.5, 2)]
        result = build_samples(records, SamplingConfig(tau_a=1.0, T=2), self.vocab)
        self.assertEqual(result.skipped, 1)
        self.assertEqual(result.samples[0].clip_windows, ((1.0, 2.0), (2.0, 3.0)))

    def test_samples_and_skips(self):
        records = [record('v', 3.0, 4.0, 1), record('v', 95.0, 99.0, 2), record('v', 100.0, 101.0, 4)]
        result = build_samples(records, SamplingConfig(tau_a=1.0, T=8), self.vocab)
        self.assertEqual(result.skipped, 1)
        self.assertEqual(len(result), 2)
        sample = result.samples[1]
        self.assertEqual(len(sample.labels), 9)
        self.assertEqual(sample.target, 4)
        self.assertEqual(sample.labels[:8], (10, 10, 10, 2, 2, 2, 2, 10))
        self.assertEqual(sample.frame_indices.shape, (8, 4))
        self.assertTrue(np.all(np.diff(sample.frame_indices.ravel()) >= 0))

    def test_label_ranges_per_strategy(self):
        chain = gen_markov_chain(10, 3, 0)
        records = gen_annotated_timelines(chain, self.vocab, 6, 40, seed=2)
        for strategy in GapStrategy:
            samples = build_samples(records, SamplingConfig(T=4, gap_strategy=strategy), self.vocab).samples
            labels = np.array([s.labels for s in samples])
            self.assertLessEqual(labels.max(), 10)
            if strategy is GapStrategy.RANDOM:
                self.assertLess(labels.max(), 10)
            if strategy is GapStrategy.UNKNOWN:
                self.assertTrue(np.any(labels == 10))

    def test_reproducible(self):
        chain = gen_markov_chain(10, 3, 0)
        records = gen_annotated_timelines(chain, self.vocab, 3, 30, seed=4)
        cfg = SamplingConfig(T=4, gap_strategy='random', seed=9)
        first = [s.labels for s in build_samples(records, cfg, self.vocab)]
        self.assertEqual(first, [s.labels for s in build_samples(list(reversed(records)), cfg, self.vocab)])


class MarkovTests(SimpleTestCase):
    def test_single_successor_is_one_hot(self):
        chain = gen_markov_chain(12, 1, 3)
        self.assertTrue(np.all(np.sort(chain.transitions, axis=1)[:, -1] == 1.0))
        sequences = gen_label_sequences(chain, 6, 50, seed=1)
        successor = chain.transitions.argmax(axis=1)
        np.testing.assert_array_equal(sequences[:, 1:], successor[sequences[:, :-1]])

    def test_rows_sum_to_one(self):
        for K, s, seed in [(5, 2, 0), (20, 5, 1), (37, 11, 7), (3, 3, 2)]:
            chain = gen_markov_chain(K, s, seed)
            self.assertLessEqual(np.abs(chain.transitions.sum(axis=1) - 1.0).max(), 1e-12)

    def test_successor_count(self):
        chain = gen_markov_chain(20, 5, 0)
        np.testing.assert_array_equal((chain.transitions > 0).sum(axis=1), np.full(20, 5))

    def test_bad_sparsity(self):
        with self.assertRaises(ValueError):
            gen_markov_chain(4, 5, 0)

    def test_same_seed_same_corpus(self):
        chain = gen_markov_chain(20, 5, 0)
        np.testing.assert_array_equal(gen_label_sequences(chain, 9, 100, 3), gen_label_sequences(chain, 9, 100, 3))
        self.assertFalse(np.array_equal(gen_label_sequences(chain, 9, 100, 3), gen_label_sequences(chain, 9, 100, 4)))

    def test_bigram_frequencies_converge(self):
        chain = gen_markov_chain(20, 5, 0)
        sequences = gen_label_sequences(chain, 9, 50_000, seed=0)
        freq, visits = bigram_frequencies(sequences, 20)
        frequent = visits >= 1000
        self.assertTrue(frequent.any())
        tv = 0.5 * np.abs(freq - chain.transitions).sum(axis=1)
        self.assertLessEqual(tv[frequent].max(), 0.02)

    def test_stationary_distribution_is_fixed_point(self):
        chain = gen_markov_chain(20, 5, 0)
        pi = stationary_distribution(chain)
        np.testing.assert_allclose(pi @ chain.transitions, pi, atol=1e-10)
        self.assertAlmostEqual(pi.sum(), 1.0, places=12)

    def test_reducible_chain(self):
        P = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.5, 0.5, 0.0]])
        chain = MarkovChainSpec(3, P, 2, seed=5)
        with self.assertRaises(ReducibleChainError):
            stationary_distribution(chain)
        with self.assertRaisesRegex(ReducibleChainError, 'different seed'):
            bayes_topk_recall(chain, 1)
        self.assertEqual(bayes_topk_recall(chain, 2).class_mean, 1.0)


class BayesRecallTests(SimpleTestCase):
    def test_k_covers_successors(self):
        chain = gen_markov_chain(20, 5, 0)
        self.assertAlmostEqual(bayes_topk_recall(chain, 5).class_mean, 1.0, places=12)
        self.assertAlmostEqual(bayes_topk_recall(chain, 7).class_mean, 1.0, places=12)

    def test_deterministic_chain(self):
        self.assertAlmostEqual(bayes_topk_recall(gen_markov_chain(20, 1, 0), 1).class_mean, 1.0, places=12)

    def test_matches_monte_carlo(self):
        chain = gen_markov_chain(20, 8, 0)
        exact = bayes_topk_recall(chain, 5).class_mean
        self.assertTrue(0.0 < exact < 1.0)
        simulated = monte_carlo_topk_recall(chain, 5, chains=200_000, steps=10, seed=1).class_mean
        self.assertLess(abs(exact - simulated), 0.005)


class RenderingTests(SimpleTestCase):
    def test_noiseless_clips_of_one_action_match(self):
        a = render_clip(4, 3, 8, 8, seed=1, sigma=0.0)
        b = render_clip(4, 3, 8, 8, seed=2, sigma=0.0)
        np.testing.assert_array_equal(a.frames, b.frames)

    def test_values_in_unit_interval(self):
        clip = render_clip(2, 4, 16, 16, seed=0)
        self.assertGreaterEqual(clip.frames.min(), 0.0)
        self.assertLessEqual(clip.frames.max(), 1.0)

    def test_templates_uncorrelated(self):
        corr = template_correlations(render_templates(20, 16, 16))
        off = corr[~np.eye(20, dtype=bool)]
        self.assertLess(np.abs(off).mean(), 0.1)
        self.assertLess(np.abs(off).max(), 0.25)

    def test_nearest_template_oracle(self):
        templates = render_templates(20, 16, 16)
        rng = np.random.default_rng(0)
        actions = rng.integers(20, size=500)
        frames = np.stack([render_clip(int(a), 4, 16, 16, seed=i).frames for i, a in enumerate(actions)])
        accuracy = np.mean(nearest_template_classify(frames, templates) == actions)
        self.assertGreater(accuracy, 0.99)

    def test_unknown_is_noise(self):
        clip = render_clip(20, 2, 8, 8, seed=0, unknown_id=20)
        self.assertEqual(clip.shape, (2, 8, 8, 3))
        self.assertFalse(np.isin(clip.frames, [0.0, 1.0]).all())


class TimelineTests(SimpleTestCase):
    def test_timelines(self):
        chain = gen_markov_chain(20, 4, 0)
        vocab = ActionVocabulary.synthetic(20)
        records = gen_annotated_timelines(chain, vocab, 3, 25, seed=1)
        self.assertEqual(len(records), 75)
        self.assertEqual(records, gen_annotated_timelines(chain, vocab, 3, 25, seed=1))
        for prev, cur in zip(records, records[1:]):
            if prev.video_id == cur.video_id:
                self.assertLessEqual(prev.stop_s, cur.start_s)
                self.assertGreater(chain.transitions[prev.action_id, cur.action_id], 0.0)
        self.assertTrue(all(vocab.action_id(r.verb_id, r.noun_id) == r.action_id for r in records))


class SeedingTests(SimpleTestCase):
    def test_derive_seed(self):
        self.assertEqual(derive_seed(3, 'train', 1), derive_seed(3, 'train', 1))
        self.assertNotEqual(derive_seed(3, 1), derive_seed(3, 2))
        self.assertNotEqual(derive_seed(3, 1, 2), derive_seed(3, 2, 1))

    def test_index_hash_is_uniform(self):
        values = np.array([index_hash(0, i) for i in range(20_000)])
        self.assertTrue(np.all((values >= 0) & (values < 1)))
        self.assertAlmostEqual(float(np.mean(values < 0.1)), 0.1, delta=0.01)


class StorageTests(SimpleTestCase):
    def test_save_and_load(self):
        chain = gen_markov_chain(20, 5, 0)
        vocab = ActionVocabulary.synthetic(20)
        corpus = SyntheticCorpus(
            chain=chain,
            vocabulary=vocab,
            sequences=gen_label_sequences(chain, 9, 40, 0),
            params={'k': 20, 'succ': 5},
            clips=np.random.default_rng(0).random((2, 1, 4, 4, 3)),
            records=gen_annotated_timelines(chain, vocab, 2, 5, seed=0),
        )
        with tempfile.TemporaryDirectory() as tmp:
            save_corpus(tmp, corpus)
            loaded = load_corpus(tmp)
        np.testing.assert_array_equal(loaded.chain.transitions, chain.transitions)
        np.testing.assert_array_equal(loaded.sequences, corpus.sequences)
        np.testing.assert_array_equal(loaded.clips, corpus.clips)
        self.assertEqual(loaded.vocabulary, vocab)
        self.assertEqual(loaded.records, corpus.records)
        self.assertEqual(loaded.params, {'k': 20, 'succ': 5})
