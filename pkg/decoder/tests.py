import numpy as np
from django.test import SimpleTestCase

from numerics import ops
from numerics.gradcheck import grad_check
from numerics.tensor import Tensor

from .config import DecoderConfig
from .exceptions import ConfigurationError, SequenceTooLongError, VocabularyMismatchError
from .network import CausalDecoder, causal_mask

TINY = dict(model_dim=8, depth=2, heads=2, max_T=6, input_dim=6, vocab_size=5, mlp_ratio=2)


class CausalMaskTests(SimpleTestCase):
    def test_single_position(self):
        np.testing.assert_array_equal(causal_mask(1), [[True]])

    def test_lower_triangle(self):
        mask = causal_mask(3)
        self.assertEqual(int(mask.sum()), 6)
        self.assertEqual(int(mask[0].sum()), 1)
        self.assertTrue(mask[2, 0] and not mask[0, 2])


class DecoderConfigTests(SimpleTestCase):
    def test_full_scale(self):
        cfg = DecoderConfig.full_scale(vocab_size=3807)
        self.assertEqual((cfg.model_dim, cfg.depth, cfg.heads), (768, 12, 12))

    def test_heads_divide_width(self):
        with self.assertRaises(ConfigurationError):
            DecoderConfig(model_dim=10, heads=4)

    def test_input_mode(self):
        with self.assertRaises(ConfigurationError):
            DecoderConfig(input_mode='pixels')


class DecoderForwardTests(SimpleTestCase):
    def setUp(self):
        self.decoder = CausalDecoder(DecoderConfig(**TINY))
        self.rng = np.random.default_rng(11)

    def test_shape_contract(self):
        for T in range(1, 7):
            self.assertEqual(self.decoder.decoder_forward(self.rng.normal(size=(T, 6))).shape, (T, 8))
        self.assertEqual(self.decoder.decoder_forward(self.rng.normal(size=(3, 4, 6))).shape, (3, 4, 8))

    def test_too_long(self):
        with self.assertRaises(SequenceTooLongError):
            self.decoder.decoder_forward(np.zeros((7, 6)))

    def test_future_rows_never_leak(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            decoder = CausalDecoder(DecoderConfig(**{**TINY, 'seed': seed}))
            Z = rng.normal(size=(6, 6))
            base = decoder.decoder_forward(Z).data
            for t in range(5):
                perturbed = Z.copy()
                rows = rng.random(6 - t - 1) < 0.7
                rows[0] = True
                perturbed[t + 1:][rows] = rng.normal(scale=10.0, size=(int(rows.sum()), 6))
                out = decoder.decoder_forward(perturbed).data
                np.testing.assert_array_equal(out[:t + 1], base[:t + 1])

    def test_appended_token_leaves_prefix(self):
        Z = self.rng.normal(size=(1, 6))
        single = self.decoder.decoder_forward(Z).data
        longer = self.decoder.decoder_forward(np.vstack([Z, self.rng.normal(size=(1, 6))])).data
        np.testing.assert_allclose(longer[:1], single, rtol=0, atol=1e-12)

    def test_non_causal_decoder_leaks(self):
        decoder = CausalDecoder(DecoderConfig(**{**TINY, 'causal': False}))
        Z = self.rng.normal(size=(4, 6))
        perturbed = Z.copy()
        perturbed[3] += 1.0
        self.assertFalse(np.array_equal(decoder.decoder_forward(Z).data[0], decoder.decoder_forward(perturbed).data[0]))

    def test_deterministic(self):
        Z = self.rng.normal(size=(4, 6))
        first = CausalDecoder(DecoderConfig(**TINY)).decoder_forward(Z).data
        np.testing.assert_array_equal(first, CausalDecoder(DecoderConfig(**TINY)).decoder_forward(Z).data)

    def test_same_width_skips_projection(self):
        decoder = CausalDecoder(DecoderConfig(**{**TINY, 'input_dim': 8}))
        self.assertNotIn('input_proj.weight', dict(decoder.named_parameters()))

    def test_nap_gradients(self):
        decoder = CausalDecoder(DecoderConfig(**{**TINY, 'depth': 1}))
        rng = np.random.default_rng(0)
        Z = rng.normal(size=(3, 6))
        targets = np.array([1, 4, 0])

        def loss():
            return ops.cross_entropy(decoder.classify(decoder.decoder_forward(Z)), targets)

        self.assertLess(grad_check(loss, decoder.parameters()), 1e-4)


class HeadTests(SimpleTestCase):
    def setUp(self):
        self.decoder = CausalDecoder(DecoderConfig(**TINY))
        self.P = Tensor(np.random.default_rng(4).normal(size=(3, 8)))

    def test_zero_classification_weights(self):
        head = self.decoder.classification_head.linear
        head.weight.data[:] = 0.0
        head.bias.data[:] = np.arange(5.0)
        np.testing.assert_array_equal(self.decoder.classify(self.P).data, np.tile(np.arange(5.0), (3, 1)))

    def test_argmax_shift_invariant(self):
        logits = self.decoder.classify(self.P).data
        np.testing.assert_array_equal(logits.argmax(axis=-1), (logits + 3.0).argmax(axis=-1))

    def test_vocabulary_mismatch(self):
        with self.assertRaises(VocabularyMismatchError):
            self.decoder.classify(self.P, vocab_size=6)

    def test_zero_feature_head_loss_is_target_norm(self):
        self.decoder.feature_head.weight.data[:] = 0.0
        self.decoder.feature_head.bias.data[:] = 0.0
        target = np.random.default_rng(5).normal(size=(3, 6))
        pred = self.decoder.predict_features(self.P)
        np.testing.assert_array_equal(pred.data, np.zeros((3, 6)))
        self.assertAlmostEqual(ops.mse(pred, target).item(), float(np.mean(target ** 2)), places=12)


class LabelPathwayTests(SimpleTestCase):
    def setUp(self):
        self.labels = CausalDecoder(DecoderConfig(**{**TINY, 'input_mode': 'labels'}))
        self.features = CausalDecoder(DecoderConfig(**TINY))

    def test_same_label_same_embedding(self):
        emb = self.labels.embed_labels([2, 0, 2]).data
        np.testing.assert_array_equal(emb[0], emb[2])

    def test_out_of_range_label(self):
        with self.assertRaises(ValueError):
            self.labels.embed_labels([5])

    def test_gradient_only_for_present_labels(self):
        out = self.labels.forward_labels(np.array([1, 3, 1]))
        weights = np.random.default_rng(0).normal(size=out.shape)
        ops.sum(out * weights).backward()
        grad = self.labels.label_embedding.weight.grad
        touched = np.any(grad != 0.0, axis=1)
        np.testing.assert_array_equal(touched, [False, True, False, True, False])

    def test_pathways_share_the_trunk(self):
        pathway_labels = self.labels.label_embedding.weight.size
        pathway_features = self.features.input_proj.weight.size + self.features.input_proj.bias.size
        self.assertEqual(
            self.labels.num_parameters() - pathway_labels,
            self.features.num_parameters() - pathway_features,
        )
        self.assertEqual(
            [name for name, _ in self.labels.trunk_parameters()],
            [name for name, _ in self.features.trunk_parameters()],
        )

    def test_labels_causal(self):
        base = self.labels.forward_labels(np.array([0, 1, 2, 3])).data
        out = self.labels.forward_labels(np.array([0, 1, 4, 4])).data
        np.testing.assert_array_equal(out[:2], base[:2])
