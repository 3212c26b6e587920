import numpy as np
from django.test import SimpleTestCase

from numerics import ops
from numerics.gradcheck import grad_check
from numerics.tensor import Tensor

from .clips import Clip, patchify
from .config import EncoderConfig
from .exceptions import ClipShapeError, ConfigurationError, VocabularyMismatchError
from .network import ClassificationHead, ToyVideoEncoder, recognition_head

TINY = dict(frame_size=4, channels=1, patch_size=2, embed_dim=8, depth=1, heads=2, n_frames=2, mlp_ratio=2)


def random_clips(rng, count, cfg, frames=None):
    frames = cfg.n_frames if frames is None else frames
    return rng.random((count, frames, cfg.frame_size, cfg.frame_size, cfg.channels))


class PatchifyTests(SimpleTestCase):
    def test_token_count(self):
        self.assertEqual(patchify(np.zeros((16, 16, 3)), 8).shape, (4, 192))

    def test_row_major_blocks(self):
        frame = np.arange(16, dtype=float).reshape(4, 4, 1)
        tokens = patchify(frame, 2)
        np.testing.assert_array_equal(tokens, [
            [0, 1, 4, 5],
            [2, 3, 6, 7],
            [8, 9, 12, 13],
            [10, 11, 14, 15],
        ])

    def test_constant_frame(self):
        tokens = patchify(np.full((8, 8, 3), 0.5), 4)
        self.assertTrue(np.all(tokens == tokens[0]))

    def test_indivisible(self):
        with self.assertRaises(ClipShapeError):
            patchify(np.zeros((6, 6, 1)), 4)


class ConfigAndClipTests(SimpleTestCase):
    def test_defaults(self):
        cfg = EncoderConfig()
        self.assertEqual(cfg.num_patches, 4)
        self.assertEqual(cfg.n_frames, 4)

    def test_heads_must_divide_width(self):
        with self.assertRaises(ConfigurationError):
            EncoderConfig(embed_dim=30, heads=4)

    def test_patch_must_divide_frame(self):
        with self.assertRaises(ConfigurationError):
            EncoderConfig(frame_size=10, patch_size=4)

    def test_clip_values_checked(self):
        with self.assertRaises(ClipShapeError):
            Clip(np.full((1, 4, 4, 1), 1.5))
        with self.assertRaises(ClipShapeError):
            Clip(np.zeros((0, 4, 4, 1)))


class EncoderTests(SimpleTestCase):
    def setUp(self):
        self.cfg = EncoderConfig(**TINY)
        self.encoder = ToyVideoEncoder(self.cfg)
        self.rng = np.random.default_rng(3)

    def test_feature_shape(self):
        z = self.encoder.encode_clip(Clip(random_clips(self.rng, 1, self.cfg)[0]))
        self.assertEqual(z.shape, (8,))

    def test_deterministic(self):
        clips = random_clips(self.rng, 3, self.cfg)
        first = ToyVideoEncoder(self.cfg).encode_sequence(clips).data
        second = ToyVideoEncoder(self.cfg).encode_sequence(clips).data
        np.testing.assert_array_equal(first, second)

    def test_future_frame_pixel_changes_feature(self):
        clip = random_clips(self.rng, 1, self.cfg)[0]
        other = clip.copy()
        other[-1, 0, 0, 0] = 1.0 - other[-1, 0, 0, 0]
        self.assertFalse(np.array_equal(self.encoder.encode_clip(clip).data, self.encoder.encode_clip(other).data))

    def test_clip_independence_is_exact(self):
        clips = random_clips(self.rng, 5, self.cfg)
        base = self.encoder.encode_sequence(clips).data
        changed = clips.copy()
        changed[3] = self.rng.random(changed[3].shape)
        out = self.encoder.encode_sequence(changed).data
        np.testing.assert_array_equal(np.delete(base, 3, axis=0), np.delete(out, 3, axis=0))
        self.assertFalse(np.array_equal(base[3], out[3]))

    def test_permuting_clips_permutes_rows(self):
        clips = random_clips(self.rng, 4, self.cfg)
        order = np.array([2, 0, 3, 1])
        base = self.encoder.encode_sequence(clips).data
        np.testing.assert_allclose(self.encoder.encode_sequence(clips[order]).data, base[order], atol=1e-12)

    def test_single_clip_sequence(self):
        clip = random_clips(self.rng, 1, self.cfg)[0]
        Z = self.encoder.encode_sequence([Clip(clip)]).data
        self.assertEqual(Z.shape, (1, 8))
        np.testing.assert_allclose(Z[0], self.encoder.encode_clip(clip).data, atol=1e-12)

    def test_batched_sequences(self):
        clips = random_clips(self.rng, 6, self.cfg)
        clips = clips.reshape(2, 3, *clips.shape[1:])
        Z = self.encoder.encode_sequence(clips).data
        self.assertEqual(Z.shape, (2, 3, 8))
        np.testing.assert_allclose(Z[1], self.encoder.encode_sequence(clips[1]).data, atol=1e-12)

    def test_heterogeneous_shapes(self):
        with self.assertRaises(ClipShapeError):
            self.encoder.encode_sequence([np.zeros((2, 4, 4, 1)), np.zeros((1, 4, 4, 1))])

    def test_too_many_frames(self):
        with self.assertRaises(ClipShapeError):
            self.encoder.encode_clip(np.zeros((3, 4, 4, 1)))

    def test_single_frame_matches_spatial_only_path(self):
        spatial_only = ToyVideoEncoder(EncoderConfig(**{**TINY, 'temporal_attention': False}))
        clips = random_clips(self.rng, 3, self.cfg, frames=1)
        np.testing.assert_allclose(
            self.encoder.encode_sequence(clips).data, spatial_only.encode_sequence(clips).data, atol=1e-10,
        )

    def test_adapter_parameters_are_temporal(self):
        names = [name for name, _ in self.encoder.adapter_parameters()]
        self.assertIn('blocks.0.temporal_attn.proj.weight', names)
        self.assertNotIn('blocks.0.spatial_attn.qkv.weight', names)

    def test_recognition_loss_gradients(self):
        rng = np.random.default_rng(0)
        for name, p in self.encoder.named_parameters():
            if 'temporal_attn.proj' in name:
                p.data = rng.normal(0.0, 0.3, size=p.shape)
        head = ClassificationHead(8, 3, rng)
        clips = random_clips(rng, 2, self.cfg)
        targets = np.array([0, 2])

        def loss():
            return ops.cross_entropy(recognition_head(self.encoder.encode_sequence(clips), head), targets)

        self.assertLess(grad_check(loss, self.encoder.parameters()), 1e-4)


class RecognitionHeadTests(SimpleTestCase):
    def setUp(self):
        self.head = ClassificationHead(4, 3, np.random.default_rng(0))

    def test_zero_weights_give_bias(self):
        self.head.linear.weight.data[:] = 0.0
        self.head.linear.bias.data[:] = [1.0, -2.0, 0.5]
        logits = recognition_head(Tensor(np.random.default_rng(1).normal(size=(5, 4))), self.head)
        np.testing.assert_array_equal(logits.data, np.tile([1.0, -2.0, 0.5], (5, 1)))

    def test_orthogonal_weights(self):
        head = ClassificationHead(3, 2, np.random.default_rng(0))
        head.linear.weight.data[:] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
        head.linear.bias.data[:] = 0.0
        logits = recognition_head(Tensor([[2.0, 0.0, 0.0]]), head)
        np.testing.assert_array_equal(logits.data, [[0.0, 0.0]])

    def test_row_changes_only_with_its_feature(self):
        rng = np.random.default_rng(2)
        Z = rng.normal(size=(4, 4))
        base = recognition_head(Tensor(Z), self.head).data
        Z[2] += 0.1
        out = recognition_head(Tensor(Z), self.head).data
        changed = np.any(out != base, axis=1)
        np.testing.assert_array_equal(changed, [False, False, True, False])

    def test_vocabulary_mismatch(self):
        with self.assertRaises(VocabularyMismatchError):
            recognition_head(Tensor(np.zeros((1, 4))), self.head, vocab_size=4)
