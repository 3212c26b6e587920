import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from corpus.markov import bayes_topk_recall, gen_label_sequences, gen_markov_chain
from corpus.sampling import SamplingConfig
from corpus.storage import SyntheticCorpus
from corpus.vocabulary import ActionVocabulary
from decoder.config import DecoderConfig
from decoder.network import CausalDecoder
from encoder.config import EncoderConfig
from encoder.network import ToyVideoEncoder
from metrics.evaluation import transition_kl
from numerics.checkpoint import load_container, read_metadata, save_container
from numerics.exceptions import CheckpointError
from numerics.tensor import Tensor, no_grad

from .arr import ARRModel, FeaturePredictor, LabelOnlyModel, init_from_pretrain
from .config import TrainConfig
from .datasets import ClipRenderer, LabelSequences, UnlabeledVideoSource, split_indices
from .exceptions import NonFiniteLossError
from .losses import (
    LossReport, feature_prediction_loss, loss_pre, loss_rec, loss_total, nap_targets, per_position_nll,
)
from .objectives import LabelOnlyObjective, Objective
from .pipelines import RunSpec, export_features, load_model, run_training, unlabeled_source
from .pretrain import extract_features, fit_feature_prediction, load_features, save_features
from .trainer import fit

TINY_ENCODER = EncoderConfig(frame_size=4, channels=1, patch_size=2, embed_dim=8, depth=1, heads=2,
                             n_frames=2, mlp_ratio=2)
TINY_DECODER = dict(model_dim=16, depth=1, heads=2, max_T=8, mlp_ratio=2)


def label_model(vocab_size, causal=True, model_dim=32, depth=2, seed=0):
    cfg = DecoderConfig(model_dim=model_dim, depth=depth, heads=4, max_T=10, input_dim=model_dim,
                        vocab_size=vocab_size, mlp_ratio=2, input_mode='labels', causal=causal, seed=seed)
    return LabelOnlyModel(CausalDecoder(cfg))


def train_label_only(model, labels, vocab_size, **overrides):
    values = dict(epochs=10, warmup_epochs=1, cosine_epochs=9, lr=3e-3, weight_decay=0.0, batch_size=32,
                  val_fraction=0.1)
    values.update(overrides)
    cfg = TrainConfig(**values)
    data = LabelSequences(labels, vocab_size)
    train, val = split_indices(len(data), cfg.val_fraction, 7)
    objective = LabelOnlyObjective(model, data, train, val, cfg, ActionVocabulary.synthetic(vocab_size))
    return fit(objective, cfg), objective


def withheld_future_top1(model, inputs, targets, seed=0):
    """Top-1 at each position t < T-1 once every later input is replaced by a random label."""
    rng = np.random.default_rng(seed)
    hits = []
    for t in range(inputs.shape[1] - 1):
        corrupted = inputs.copy()
        corrupted[:, t + 1:] = rng.integers(model.decoder.cfg.vocab_size, size=corrupted[:, t + 1:].shape)
        with no_grad():
            predicted = model(corrupted).data[:, t].argmax(axis=-1)
        hits.append(predicted == targets[:, t])
    return float(np.mean(hits))


def synthetic_corpus(K=6, s=2, num=60, length=5, seed=0):
    chain = gen_markov_chain(K, s, seed)
    return SyntheticCorpus(
        chain=chain,
        vocabulary=ActionVocabulary.synthetic(K),
        sequences=gen_label_sequences(chain, length, num, seed),
        params={'sigma': 0.25, 'seed': seed},
    )


class NapTargetTests(SimpleTestCase):
    def test_shift_by_one(self):
        inputs, targets = nap_targets([5, 7, 7, 2], T=3)
        np.testing.assert_array_equal(inputs, [5, 7, 7])
        np.testing.assert_array_equal(targets, [7, 7, 2])

    def test_constant_sequence(self):
        inputs, targets = nap_targets([4, 4, 4])
        np.testing.assert_array_equal(inputs, targets)

    def test_single_pair(self):
        inputs, targets = nap_targets([[1, 2]])
        self.assertEqual((inputs.tolist(), targets.tolist()), ([[1]], [[2]]))

    def test_wrong_length(self):
        with self.assertRaises(ValueError):
            nap_targets([1, 2, 3], T=3)
        with self.assertRaises(ValueError):
            nap_targets([1])


class LossTests(SimpleTestCase):
    def test_rec_uniform(self):
        self.assertAlmostEqual(loss_rec(np.zeros((2, 4)), np.array([0, 3])).item(), 2 * math.log(4), places=12)

    def test_rec_confident(self):
        logits = np.array([[30.0, 0.0, 0.0], [0.0, 0.0, 30.0]])
        self.assertLess(loss_rec(logits, np.array([0, 2])).item(), 1e-10)

    def test_rec_fixture(self):
        logits = np.array([[1.0, 2.0, 3.0], [0.5, -0.5, 0.0]])
        expected = -(math.log(math.exp(1) / (math.exp(1) + math.exp(2) + math.exp(3)))
                     + math.log(math.exp(-0.5) / (math.exp(0.5) + math.exp(-0.5) + 1.0)))
        self.assertAlmostEqual(loss_rec(logits, np.array([0, 1])).item(), expected, places=12)

    def test_pre_uniform(self):
        self.assertAlmostEqual(loss_pre(np.zeros((3, 7)), np.array([1, 2, 3])).item(), 3 * math.log(7), places=12)

    def test_pre_decomposes(self):
        rng = np.random.default_rng(0)
        logits = rng.normal(size=(4, 5, 6))
        targets = rng.integers(6, size=(4, 5))
        batched = loss_pre(logits, targets).item()
        separate = sum(loss_pre(logits[:, t:t + 1], targets[:, t:t + 1]).item() for t in range(5))
        self.assertAlmostEqual(batched, separate, delta=1e-12)
        self.assertAlmostEqual(batched, per_position_nll(logits, targets).sum(), delta=1e-12)

    def test_time_shift(self):
        rng = np.random.default_rng(1)
        labels = rng.integers(5, size=7)
        logits = rng.normal(size=(6, 5))
        base = per_position_nll(logits, nap_targets(labels)[1])
        for t in range(6):
            corrupted = labels.copy()
            corrupted[t + 1] = (corrupted[t + 1] + 1) % 5
            changed = per_position_nll(logits, nap_targets(corrupted)[1]) != base
            np.testing.assert_array_equal(changed, np.arange(6) == t)

    def test_total(self):
        self.assertEqual(loss_total(Tensor(1.0), Tensor(2.0)).item(), 3.0)
        self.assertEqual(loss_total(Tensor(1.0), Tensor(2.0), (0.0, 1.0)).item(), 2.0)
        self.assertEqual(loss_total(Tensor(1.0), Tensor(2.0), (0.5, 2.0)).item(), 4.5)

    def test_total_gradient_is_sum_of_parts(self):
        rng = np.random.default_rng(2)
        x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        rec_targets, pre_targets = np.array([0, 1, 2]), np.array([3, 3, 1])
        loss_total(loss_rec(x, rec_targets), loss_pre(x, pre_targets)).backward()
        combined = x.grad.copy()
        x.zero_grad()
        loss_rec(x, rec_targets).backward()
        loss_pre(x, pre_targets).backward()
        np.testing.assert_allclose(combined, x.grad, atol=1e-14)

    def test_report_accounting(self):
        report = LossReport.from_tensors(Tensor(0.25), Tensor(0.5), loss_total(Tensor(0.25), Tensor(0.5)))
        self.assertLessEqual(abs(report.l_total - (report.l_rec + report.l_pre)), 1e-12)

    def test_zero_prediction_feature_loss(self):
        z = np.random.default_rng(3).normal(size=(2, 5, 4))
        loss = feature_prediction_loss(Tensor(np.zeros_like(z)), z).item()
        self.assertAlmostEqual(loss, 4 * np.mean(z[:, 1:] ** 2), places=12)
        self.assertAlmostEqual(loss, np.mean(np.sum(np.mean(z[:, 1:] ** 2, axis=2), axis=1)), places=12)


class JointLossTests(SimpleTestCase):
    def setUp(self):
        decoder = CausalDecoder(DecoderConfig(**TINY_DECODER, input_dim=8, vocab_size=5))
        self.model = ARRModel(ToyVideoEncoder(TINY_ENCODER), decoder)
        rng = np.random.default_rng(0)
        self.clips = rng.random((2, 3, 2, 4, 4, 1))
        self.labels = rng.integers(5, size=(2, 4))

    def backward(self, weights):
        self.model.zero_grad()
        rec, nap = self.model(self.clips)
        loss_total(loss_rec(rec, self.labels[:, :-1]), loss_pre(nap, self.labels[:, 1:]), weights).backward()

    def test_prediction_loss_reaches_encoder(self):
        self.backward((0.0, 1.0))
        grads = [p.grad for p in self.model.encoder.parameters()]
        self.assertTrue(any(g is not None and np.any(g != 0) for g in grads))
        self.assertTrue(all(p.grad is None for p in self.model.recognition_head.parameters()))

    def test_recognition_loss_skips_decoder(self):
        self.backward((1.0, 0.0))
        self.assertTrue(all(p.grad is None for p in self.model.decoder.parameters()))

    def test_adapter_tuning_parameters(self):
        names = [name for name, _ in self.model.trainable_parameters('adapters')]
        self.assertTrue(all(not n.startswith('encoder.') or '.temporal_' in n or n.startswith('encoder.norm.')
                            for n in names))
        self.assertIn('recognition_head.linear.weight', names)
        frozen = [name for name, _ in self.model.trainable_parameters('frozen')]
        self.assertFalse(any(n.startswith('encoder.') for n in frozen))


class DatasetTests(SimpleTestCase):
    def test_split_is_seeded_and_sized(self):
        train, val = split_indices(5000, 0.1, 3)
        self.assertEqual(len(train) + len(val), 5000)
        self.assertAlmostEqual(len(val) / 5000, 0.1, delta=0.02)
        np.testing.assert_array_equal(val, split_indices(5000, 0.1, 3)[1])
        np.testing.assert_array_equal(val[val < 1000], split_indices(1000, 0.1, 3)[1])

    def test_clip_renderer(self):
        renderer = ClipRenderer(4, 1, 2, unknown_id=6, seed=1)
        clips = renderer.render_batch([0, 1], np.array([[0, 6], [3, 3]]))
        self.assertEqual(clips.shape, (2, 2, 2, 4, 4, 1))
        np.testing.assert_array_equal(clips, renderer.render_batch([0, 1], np.array([[0, 6], [3, 3]])))
        self.assertTrue(np.all((clips >= 0) & (clips <= 1)))

    def test_stored_clips_replace_rendering(self):
        stored = np.random.default_rng(0).random((2, 5, 3, 4, 4, 1))
        renderer = ClipRenderer(4, 1, 2, seed=1, stored=stored)
        np.testing.assert_array_equal(renderer.render(1, [0, 2, 4]), stored[1, :3, :2])
        # sequences past the stored ones are rendered
        np.testing.assert_array_equal(renderer.render(2, [0, 2]), ClipRenderer(4, 1, 2, seed=1).render(2, [0, 2]))
        self.assertIsNone(ClipRenderer(8, 1, 2, stored=stored).stored)
        self.assertIsNone(ClipRenderer(4, 1, 4, stored=stored).stored)

    def test_unlabeled_videos(self):
        source = UnlabeledVideoSource(np.array([[0, 1, 2], [3, 4, 5]]), 4, 1, frames_per_action=2)
        self.assertEqual(source.sample_batch([0, 1], 3, 2).shape, (2, 3, 1, 4, 4, 1))
        with self.assertRaises(ValueError):
            source.sample(0, 4, 2)

    def test_label_sequences_range(self):
        with self.assertRaises(ValueError):
            LabelSequences(np.array([[0, 5]]), 5)


class NanObjective(Objective):
    def __init__(self, cfg):
        super().__init__(None, np.arange(4), np.arange(4), cfg)

    def trainable_parameters(self):
        return []

    def batch_loss(self, indices):
        value = Tensor(float('nan'))
        return value, LossReport(float('nan'), float('nan'), float('nan'))

    def validate(self):
        return {}


class FitTests(SimpleTestCase):
    def test_non_finite_loss_aborts_with_context(self):
        cfg = TrainConfig(epochs=2, warmup_epochs=1, cosine_epochs=1)
        with self.assertRaises(NonFiniteLossError) as ctx:
            fit(NanObjective(cfg), cfg)
        self.assertEqual((ctx.exception.epoch, ctx.exception.step), (0, 0))

    def test_overfits_eight_samples(self):
        rng = np.random.default_rng(0)
        labels = np.column_stack([rng.permutation(10)[:8], rng.integers(10, size=(8, 4))])
        result, _ = train_label_only(label_model(10), labels, 10, epochs=200, warmup_epochs=5, cosine_epochs=195,
                                     lr=5e-3, batch_size=8, val_fraction=0.0)
        self.assertLess(result.final('l_total'), 0.05)

    def test_identical_seeds_identical_traces(self):
        labels = gen_label_sequences(gen_markov_chain(8, 3, 0), 5, 64, 0)
        first, _ = train_label_only(label_model(8), labels, 8, epochs=3, warmup_epochs=1, cosine_epochs=2)
        second, _ = train_label_only(label_model(8), labels, 8, epochs=3, warmup_epochs=1, cosine_epochs=2)
        self.assertEqual(first.history, second.history)

    def test_deterministic_chain_is_learned(self):
        labels = gen_label_sequences(gen_markov_chain(20, 1, 0), 9, 1000, 0)
        result, _ = train_label_only(label_model(20, model_dim=32, depth=1), labels, 20, epochs=20,
                                     warmup_epochs=2, cosine_epochs=18)
        self.assertGreaterEqual(max(row['top1'] for row in result.history), 0.999)

    def test_epoch_zero_evaluates_initial_model(self):
        labels = gen_label_sequences(gen_markov_chain(8, 3, 0), 5, 40, 0)
        result, _ = train_label_only(label_model(8), labels, 8, epochs=0)
        self.assertEqual(len(result.history), 1)
        self.assertEqual(result.steps, 0)

    def test_information_leak(self):
        chain = gen_markov_chain(20, 5, 0)
        labels = gen_label_sequences(chain, 9, 600, 0)
        schedule = dict(epochs=30, warmup_epochs=2, cosine_epochs=28)
        causal, causal_objective = train_label_only(label_model(20), labels, 20, **schedule)
        leaky, leaky_objective = train_label_only(label_model(20, causal=False), labels, 20, **schedule)
        self.assertLess(leaky.final('l_pre'), 0.7 * causal.final('l_pre'))
        inputs = nap_targets(labels[:4])[0]
        full = causal_objective.model(inputs).data
        truncated = causal_objective.model(inputs[:, :5]).data
        np.testing.assert_allclose(truncated, full[:, :5], rtol=0, atol=1e-12)

        # with the future withheld the leaky model falls to chance, the causal one does not
        held_out = nap_targets(gen_label_sequences(chain, 9, 200, 1))
        leaky_top1 = withheld_future_top1(leaky_objective.model, *held_out)
        causal_top1 = withheld_future_top1(causal_objective.model, *held_out)
        self.assertLess(leaky_top1, 0.25)
        self.assertGreater(causal_top1, leaky_top1 + 0.15)

    def test_sparse_chain_recall_and_transition_fit(self):
        chain = gen_markov_chain(10, 2, 0)
        labels = gen_label_sequences(chain, 5, 4000, 0)
        result, objective = train_label_only(label_model(10), labels, 10, epochs=25, warmup_epochs=2,
                                             cosine_epochs=23)
        bayes = bayes_topk_recall(chain, 5).class_mean
        self.assertGreaterEqual(result.final_metrics['cm_recall@5'], 0.95 * bayes)
        inputs = nap_targets(gen_label_sequences(chain, 5, 500, 1))[0]
        with no_grad():
            logits = objective.model(inputs).data
        self.assertLessEqual(transition_kl(logits, inputs, chain.transitions, min_count=100), 0.05)


class PretrainTests(SimpleTestCase):
    def pretrain_cfg(self, **overrides):
        values = dict(mode='pretrain', epochs=30, warmup_epochs=2, cosine_epochs=28, lr=3e-3, weight_decay=0.0,
                      batch_size=16, pretrain_frames=4, val_fraction=0.0)
        values.update(overrides)
        return TrainConfig(**values)

    def test_constant_features_are_fit(self):
        features = np.tile(0.5 * np.random.default_rng(0).normal(size=8), (32, 4, 1))
        decoder = CausalDecoder(DecoderConfig(**TINY_DECODER, input_dim=8, vocab_size=4))
        cfg = self.pretrain_cfg(epochs=300, warmup_epochs=10, cosine_epochs=290, lr=1e-2, batch_size=32)
        result = fit_feature_prediction(features, decoder, cfg)
        self.assertLess(result.final('l_total'), 1e-3)

    def test_pretraining_halves_loss_and_keeps_encoder(self):
        encoder = ToyVideoEncoder(TINY_ENCODER)
        before = {name: p.data.copy() for name, p in encoder.named_parameters()}
        sequences = gen_label_sequences(gen_markov_chain(6, 2, 0), 6, 64, 0)
        source = UnlabeledVideoSource(sequences, 4, 1, frames_per_action=2)
        features = extract_features(source, encoder, 4, 1)
        decoder = CausalDecoder(DecoderConfig(**TINY_DECODER, input_dim=8, vocab_size=6))
        result = fit_feature_prediction(features, decoder, self.pretrain_cfg(epochs=60, cosine_epochs=58),
                                        encoder=encoder)
        self.assertLessEqual(result.final('l_total'), 0.5 * result.history[0]['l_total'])
        for name, p in encoder.named_parameters():
            np.testing.assert_array_equal(p.data, before[name])

    def test_features_file_round_trip(self):
        features = np.random.default_rng(4).normal(size=(5, 3, 8))
        with tempfile.TemporaryDirectory() as tmp:
            path = save_features(Path(tmp, 'features.arrc'), features, {'frames': 3})
            loaded, metadata = load_features(path)
        np.testing.assert_array_equal(loaded, features)
        self.assertEqual(metadata, {'frames': 3, 'kind': 'encoder_features'})

    def test_features_file_kind_checked(self):
        with tempfile.TemporaryDirectory() as tmp:
            other = save_container(Path(tmp, 'model.arrc'), {'features': np.zeros((2, 2, 2))}, {'kind': 'model'})
            with self.assertRaises(CheckpointError):
                load_features(other)
            with self.assertRaises(ValueError):
                save_features(Path(tmp, 'flat.arrc'), np.zeros((2, 8)))

    def test_decoder_fit_from_exported_features(self):
        corpus = synthetic_corpus(num=24)
        cfg = self.pretrain_cfg(epochs=2, warmup_epochs=1, cosine_epochs=1)
        with tempfile.TemporaryDirectory() as tmp:
            features, path = export_features(corpus, TINY_ENCODER, cfg, Path(tmp, 'features.arrc'))
            self.assertEqual(features.shape, (24, 4, 8))
            self.assertEqual(load_features(path)[1]['encoder_config'], TINY_ENCODER.to_dict())
            from_file = fit_feature_prediction(path, CausalDecoder(DecoderConfig(**TINY_DECODER, input_dim=8,
                                                                                 vocab_size=6)), cfg)
        in_memory = fit_feature_prediction(features, CausalDecoder(DecoderConfig(**TINY_DECODER, input_dim=8,
                                                                                 vocab_size=6)), cfg)
        self.assertEqual([row['l_total'] for row in from_file.history],
                         [row['l_total'] for row in in_memory.history])
        # the same features pre-training would encode
        encoded = extract_features(unlabeled_source(corpus, TINY_ENCODER, cfg), ToyVideoEncoder(TINY_ENCODER), 4, 1)
        np.testing.assert_array_equal(features, encoded)


class PipelineTests(SimpleTestCase):
    def spec(self, mode, **train):
        values = dict(mode=mode, epochs=2, warmup_epochs=1, cosine_epochs=1, lr=1e-3, batch_size=8)
        values.update(train)
        return RunSpec(train=TrainConfig(**values), encoder=TINY_ENCODER, decoder=TINY_DECODER,
                       sampling=SamplingConfig(T=4, n=2))

    def test_end_to_end_from_pretrain_checkpoint(self):
        corpus = synthetic_corpus()
        with tempfile.TemporaryDirectory() as tmp:
            pre = run_training(corpus, self.spec('pretrain', pretrain_frames=4), Path(tmp, 'pre'))
            self.assertEqual(read_metadata(pre.result.paths['final'])['provenance'], 'pretrain')

            spec = self.spec('end-to-end')
            spec.init_decoder = str(pre.result.paths['final'])
            outcome = run_training(corpus, spec, Path(tmp, 'e2e'))
            self.assertTrue(Path(tmp, 'e2e', 'epochs.csv').exists())
            self.assertIn('recognition_top1', outcome.result.final_metrics)

            model, _ = load_model(outcome.result.paths['final'])
            for name, p in model.named_parameters():
                np.testing.assert_array_equal(p.data, dict(outcome.model.named_parameters())[name].data)

            best = read_metadata(outcome.result.paths['best'])
            self.assertEqual(best['epoch'], outcome.result.best_epoch)
            self.assertEqual(best['provenance'], 'end_to_end')

    def test_pretrain_shape_mismatch_lists_keys(self):
        corpus = synthetic_corpus()
        with tempfile.TemporaryDirectory() as tmp:
            pre = run_training(corpus, self.spec('pretrain', pretrain_frames=4, epochs=0), Path(tmp, 'pre'))
            decoder = CausalDecoder(DecoderConfig(model_dim=32, depth=1, heads=2, max_T=8, input_dim=8, vocab_size=6))
            model = ARRModel(ToyVideoEncoder(TINY_ENCODER), decoder)
            with self.assertRaises(CheckpointError) as ctx:
                init_from_pretrain(model, pre.result.paths['final'])
        self.assertTrue(any(m.startswith('decoder: ') for m in ctx.exception.mismatches))

    def test_pretrained_decoder_fits_wider_vocabulary(self):
        encoder = ToyVideoEncoder(TINY_ENCODER)
        sequences = gen_label_sequences(gen_markov_chain(6, 2, 0), 6, 64, 0)
        features = extract_features(UnlabeledVideoSource(sequences, 4, 1, frames_per_action=2), encoder, 4, 1)
        cfg = TrainConfig(mode='pretrain', epochs=60, warmup_epochs=2, cosine_epochs=58, lr=3e-3, weight_decay=0.0,
                          batch_size=16, pretrain_frames=4, val_fraction=0.0)
        with tempfile.TemporaryDirectory() as tmp:
            pre = fit_feature_prediction(features, CausalDecoder(DecoderConfig(**TINY_DECODER, input_dim=8,
                                                                               vocab_size=6)),
                                         cfg, encoder=encoder, run_dir=Path(tmp))
            arrays, _ = load_container(pre.paths['final'])
            # one more class than pre-training saw, as with an unknown class
            decoder = CausalDecoder(DecoderConfig(**TINY_DECODER, input_dim=8, vocab_size=7, seed=5))
            head = {name: p.data.copy() for name, p in decoder.named_parameters()
                    if name.startswith('classification_head.')}
            model = ARRModel(ToyVideoEncoder(TINY_ENCODER), decoder)
            init_from_pretrain(model, pre.paths['final'])
        for name, p in decoder.named_parameters():
            expected = head[name] if name in head else arrays[f"decoder.{name}"]
            np.testing.assert_array_equal(p.data, expected)

        # the loaded decoder keeps what pre-training learned
        with no_grad():
            warm = feature_prediction_loss(FeaturePredictor(None, decoder)(features), features).item()
        self.assertLess(warm, 0.75 * pre.history[0]['l_total'])

    def test_end_to_end_recognizes_observed_clips(self):
        spec = self.spec('end-to-end', epochs=40, warmup_epochs=2, cosine_epochs=38, lr=3e-3, batch_size=16,
                         val_fraction=0.2)
        spec.encoder = EncoderConfig(frame_size=4, channels=1, patch_size=2, embed_dim=16, depth=1, heads=2,
                                     n_frames=2, mlp_ratio=2)
        outcome = run_training(synthetic_corpus(num=300), spec)
        self.assertGreaterEqual(outcome.result.final_metrics['recognition_top1'], 0.95)

    def test_label_only_checkpoint_rejected_as_init(self):
        corpus = synthetic_corpus()
        with tempfile.TemporaryDirectory() as tmp:
            run = run_training(corpus, self.spec('label_only', epochs=0), Path(tmp, 'labels'))
            decoder = CausalDecoder(DecoderConfig(**TINY_DECODER, input_dim=8, vocab_size=6))
            with self.assertRaises(CheckpointError):
                init_from_pretrain(ARRModel(ToyVideoEncoder(TINY_ENCODER), decoder), run.result.paths['final'])
