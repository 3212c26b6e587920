import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from . import ops
from .checkpoint import load_checkpoint, load_container, save_checkpoint, save_container
from .exceptions import (
    CheckpointError, DegenerateAttentionError, NonFiniteGradientError, NumericsError, ShapeMismatchError,
)
from .gradcheck import grad_check
from .layers import FeedForward, LayerNorm, Linear, MultiHeadAttention
from .optim import Adam, OptimizerState, adam_step
from .schedule import LrSchedule, lr_at_step
from .tensor import Tensor, no_grad, parameter

SEEDS = range(100)


class MaskedSoftmaxTests(SimpleTestCase):
    def test_uniform_logits(self):
        out = ops.masked_softmax(Tensor([0.0, 0.0, 0.0]))
        np.testing.assert_allclose(out.data, [1 / 3, 1 / 3, 1 / 3], atol=1e-15)

    def test_last_entry_masked(self):
        out = ops.masked_softmax(Tensor([1.0, 2.0, 3.0]), np.array([True, True, False]))
        np.testing.assert_allclose(out.data, [0.26894142, 0.73105858, 0.0], atol=1e-8)
        self.assertEqual(out.data[2], 0.0)

    def test_shift_invariance(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(4, 6))
        np.testing.assert_allclose(
            ops.masked_softmax(Tensor(x)).data, ops.masked_softmax(Tensor(x + 7.5)).data, atol=1e-14,
        )

    def test_fully_masked_row_is_an_error(self):
        mask = np.array([[True, False], [False, False]])
        with self.assertRaises(DegenerateAttentionError):
            ops.masked_softmax(Tensor(np.zeros((2, 2))), mask)

    def test_rows_sum_to_one_and_masked_entries_are_zero(self):
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            x = rng.normal(scale=5.0, size=(3, 5, 5))
            mask = rng.random((5, 5)) < 0.6
            mask[:, 0] = True
            probs = ops.masked_softmax(Tensor(x), mask).data
            np.testing.assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-12)
            self.assertTrue(np.all(probs[:, ~mask] == 0.0))


class LayerNormTests(SimpleTestCase):
    def test_constant_row(self):
        out = ops.layer_norm(Tensor([[2.0, 2.0, 2.0]]), np.ones(3), np.zeros(3))
        np.testing.assert_array_equal(out.data, [[0.0, 0.0, 0.0]])

    def test_two_entry_row(self):
        out = ops.layer_norm(Tensor([[1.0, 3.0]]), np.ones(2), np.zeros(2), eps=1e-14)
        np.testing.assert_allclose(out.data, [[-1.0, 1.0]], atol=1e-10)

    def test_beta_shift(self):
        x = Tensor(np.random.default_rng(1).normal(size=(2, 4)))
        b = np.array([0.5, -1.0, 2.0, 0.0])
        base = ops.layer_norm(x, np.ones(4), np.zeros(4)).data
        shifted = ops.layer_norm(x, np.ones(4), b).data
        np.testing.assert_allclose(shifted, base + b, atol=1e-14)

    def test_gamma_shape_checked(self):
        with self.assertRaises(ShapeMismatchError):
            ops.layer_norm(Tensor(np.zeros((2, 4))), np.ones(3), np.zeros(3))


class CrossEntropyTests(SimpleTestCase):
    def test_uniform_logits(self):
        self.assertAlmostEqual(ops.cross_entropy(Tensor(np.zeros((1, 4))), [0]).item(), math.log(4), places=12)

    def test_hand_computed_value(self):
        loss = ops.cross_entropy(Tensor([[0.0, math.log(3.0)]]), [0])
        self.assertAlmostEqual(loss.item(), math.log(4), places=12)

    def test_sums_over_positions(self):
        self.assertAlmostEqual(ops.cross_entropy(Tensor(np.zeros((2, 4))), [1, 3]).item(), 2 * math.log(4), places=12)

    def test_averages_over_batch(self):
        logits = np.random.default_rng(2).normal(size=(3, 2, 5))
        targets = np.array([[0, 1], [2, 3], [4, 0]])
        batched = ops.cross_entropy(Tensor(logits), targets).item()
        single = [ops.cross_entropy(Tensor(logits[b]), targets[b]).item() for b in range(3)]
        self.assertAlmostEqual(batched, np.mean(single), places=12)

    def test_out_of_range_target(self):
        with self.assertRaises(NumericsError):
            ops.cross_entropy(Tensor(np.zeros((1, 4))), [4])


class MseTests(SimpleTestCase):
    def test_identical_is_zero(self):
        x = np.arange(6.0).reshape(2, 3)
        self.assertEqual(ops.mse(Tensor(x), Tensor(x)).item(), 0.0)

    def test_hand_computed_value(self):
        self.assertEqual(ops.mse(Tensor([0.0, 0.0]), Tensor([2.0, 0.0])).item(), 2.0)

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        a, b = rng.normal(size=5), rng.normal(size=5)
        self.assertEqual(ops.mse(Tensor(a), Tensor(b)).item(), ops.mse(Tensor(b), Tensor(a)).item())

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeMismatchError):
            ops.mse(Tensor(np.zeros(3)), Tensor(np.zeros(4)))


class AdamTests(SimpleTestCase):
    def _param(self, value, grad):
        p = parameter([value])
        p.grad = np.array([grad])
        return p

    def test_first_step_moves_by_lr(self):
        p = self._param(0.0, 0.5)
        adam_step({'w': p}, OptimizerState(lr=0.1, weight_decay=0.0))
        self.assertAlmostEqual(p.data[0], -0.1, places=6)

    def test_zero_gradient_no_decay(self):
        p = self._param(1.5, 0.0)
        adam_step({'w': p}, OptimizerState(lr=0.1, weight_decay=0.0))
        self.assertEqual(p.data[0], 1.5)

    def test_decay_only(self):
        p = self._param(2.0, 0.0)
        adam_step({'w': p}, OptimizerState(lr=0.1, weight_decay=0.5))
        self.assertAlmostEqual(p.data[0], 2.0 * (1 - 0.1 * 0.5), places=12)

    def test_step_counter_increases(self):
        state = OptimizerState()
        p = self._param(0.0, 1.0)
        adam_step({'w': p}, state)
        adam_step({'w': p}, state)
        self.assertEqual(state.step, 2)

    def test_bit_reproducible(self):
        def run():
            rng = np.random.default_rng(5)
            p = parameter(rng.normal(size=(3, 4)))
            opt = Adam([('w', p)], lr=0.01)
            for _ in range(5):
                p.grad = rng.normal(size=(3, 4))
                opt.step()
            return p.data

        np.testing.assert_array_equal(run(), run())

    def test_non_finite_gradient_names_parameter(self):
        p = self._param(0.0, np.nan)
        with self.assertRaises(NonFiniteGradientError) as ctx:
            adam_step({'decoder.blocks.0.attn.qkv.weight': p}, OptimizerState())
        self.assertIn('decoder.blocks.0.attn.qkv.weight', str(ctx.exception))


class LrScheduleTests(SimpleTestCase):
    def setUp(self):
        self.schedule = LrSchedule(base_lr=1e-4, warmup_epochs=20, cosine_epochs=30, steps_per_epoch=10)

    def test_mid_warmup(self):
        self.assertAlmostEqual(lr_at_step(self.schedule, 100), 5e-5, places=15)

    def test_end_of_warmup(self):
        self.assertAlmostEqual(lr_at_step(self.schedule, 200), 1e-4, places=15)

    def test_end_of_cosine_and_after(self):
        self.assertAlmostEqual(lr_at_step(self.schedule, 500), 0.0, places=15)
        self.assertEqual(lr_at_step(self.schedule, 900), 0.0)

    def test_continuity_at_boundary(self):
        gap = abs(lr_at_step(self.schedule, 199) - lr_at_step(self.schedule, 200))
        self.assertLessEqual(gap, 1e-4 / self.schedule.warmup_steps + 1e-18)

    def test_never_negative(self):
        self.assertTrue(all(lr_at_step(self.schedule, s) >= 0 for s in range(0, 700)))


class GradCheckTests(SimpleTestCase):
    """Every differentiable op against central differences, 64-bit, h=1e-5."""
    tolerance = 1e-4

    def assertGradOk(self, f, inputs):
        self.assertLess(grad_check(f, inputs, h=1e-5), self.tolerance)

    def test_sum_is_exact(self):
        x = parameter(np.random.default_rng(0).normal(size=(3, 2)))
        self.assertLess(grad_check(lambda: ops.sum(x), x), 1e-8)

    def test_cross_entropy_3x5(self):
        x = parameter(np.random.default_rng(1).normal(size=(3, 5)))
        targets = np.array([0, 4, 2])
        self.assertLess(grad_check(lambda: ops.cross_entropy(x, targets), x), 1e-5)

    def test_matmul_and_add(self):
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            a = parameter(rng.normal(size=(2, 3, 4)))
            b = parameter(rng.normal(size=(4, 2)))
            c = parameter(rng.normal(size=(2,)))
            w = rng.normal(size=(2, 3, 2))
            self.assertGradOk(lambda: ops.sum(ops.mul(ops.add(ops.matmul(a, b), c), w)), [a, b, c])

    def test_gelu(self):
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            x = parameter(rng.normal(size=(3, 4)))
            w = rng.normal(size=(3, 4))
            self.assertGradOk(lambda: ops.sum(ops.mul(ops.gelu(x), w)), x)

    def test_masked_softmax(self):
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            x = parameter(rng.normal(size=(2, 4, 4)))
            w = rng.normal(size=(2, 4, 4))
            mask = np.tril(np.ones((4, 4), dtype=bool))
            self.assertGradOk(lambda: ops.sum(ops.mul(ops.masked_softmax(x, mask), w)), x)

    def test_layer_norm(self):
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            x = parameter(rng.normal(size=(3, 5)))
            gamma = parameter(rng.normal(size=5))
            beta = parameter(rng.normal(size=5))
            w = rng.normal(size=(3, 5))
            self.assertGradOk(lambda: ops.sum(ops.mul(ops.layer_norm(x, gamma, beta), w)), [x, gamma, beta])

    def test_embedding(self):
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            table = parameter(rng.normal(size=(6, 3)))
            idx = rng.integers(0, 6, size=(2, 4))
            w = rng.normal(size=(2, 4, 3))
            self.assertGradOk(lambda: ops.sum(ops.mul(ops.embedding(table, idx), w)), table)

    def test_mse(self):
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            pred = parameter(rng.normal(size=(2, 3, 4)))
            target = rng.normal(size=(2, 3, 4))
            self.assertGradOk(lambda: ops.mse(pred, target), pred)

    def test_cross_entropy_batched(self):
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            logits = parameter(rng.normal(size=(2, 3, 5)))
            targets = rng.integers(0, 5, size=(2, 3))
            self.assertGradOk(lambda: ops.cross_entropy(logits, targets), logits)

    def test_shape_ops(self):
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            x = parameter(rng.normal(size=(2, 3, 4)))
            y = parameter(rng.normal(size=(2, 1, 4)))
            w = rng.normal(size=(2, 4))

            def f():
                joined = ops.concat([y, x], axis=1)
                picked = joined.transpose(2, 0, 1)[:, :, 0].reshape(2, 4)
                return ops.sum(ops.mul(picked, w)) + ops.mean(x, axis=1).sum()

            self.assertGradOk(f, [x, y])

    def test_attention_and_feed_forward(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            attn = MultiHeadAttention(4, 2, rng)
            ff = FeedForward(4, 8, rng)
            norm = LayerNorm(4)
            x = parameter(rng.normal(size=(2, 3, 4)))
            w = rng.normal(size=(2, 3, 4))
            mask = np.tril(np.ones((3, 3), dtype=bool))

            def f():
                h = ops.add(x, attn(norm(x), mask))
                return ops.sum(ops.mul(ops.add(h, ff(h)), w))

            self.assertGradOk(f, [x] + attn.parameters() + ff.parameters())


class TensorTests(SimpleTestCase):
    def test_no_grad_skips_graph(self):
        x = parameter([1.0, 2.0])
        with no_grad():
            y = ops.mul(x, 3.0)
        self.assertFalse(y.requires_grad)

    def test_shared_subgraph_accumulates(self):
        x = parameter([2.0])
        y = ops.mul(ops.add(x, x), x)
        y.sum().backward()
        np.testing.assert_allclose(x.grad, [8.0])


class CheckpointTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = Path(self.tmp.name) / 'model.arrc'

    def tearDown(self):
        self.tmp.cleanup()

    def test_round_trip_with_metadata(self):
        layer = Linear(3, 2, np.random.default_rng(0))
        save_checkpoint(self.path, layer, {'provenance': 'pretrain'})
        other = Linear(3, 2, np.random.default_rng(1))
        metadata = load_checkpoint(self.path, other)
        self.assertEqual(metadata, {'provenance': 'pretrain'})
        np.testing.assert_array_equal(other.weight.data, layer.weight.data)

    def test_manifest_records_offsets(self):
        save_container(self.path, {'a': np.zeros((2, 3)), 'b': np.arange(4, dtype=np.int64)})
        arrays, _ = load_container(self.path)
        self.assertEqual(arrays['a'].shape, (2, 3))
        np.testing.assert_array_equal(arrays['b'], [0, 1, 2, 3])

    def test_shape_mismatches_are_listed(self):
        save_checkpoint(self.path, Linear(3, 2, np.random.default_rng(0)))
        with self.assertRaises(CheckpointError) as ctx:
            load_checkpoint(self.path, Linear(4, 5, np.random.default_rng(0)))
        self.assertEqual(len(ctx.exception.mismatches), 2)

    def test_expected_shapes(self):
        save_container(self.path, {'w': np.zeros((2, 2))})
        with self.assertRaises(CheckpointError):
            load_container(self.path, expected_shapes={'w': (3, 2), 'b': (2,)})

    def test_bad_magic(self):
        self.path.write_bytes(b'not a container')
        with self.assertRaises(CheckpointError):
            load_container(self.path)
