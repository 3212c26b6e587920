import json
import math
import tempfile
from io import StringIO
from pathlib import Path
from unittest import mock

import pandas as pd
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, override_settings
from rest_framework import serializers

from training.exceptions import TrainingError
from training.pretrain import load_features

from .models import EpochRecord, ExperimentRun
from .runners import metric_differences, sweep_table
from .runs import MANIFEST_FILE, blob_sha1, hash_directory, merge_config, parse_assignment, read_manifest
from .serializers import CorpusConfigSerializer, SweepConfigSerializer, TrainConfigSerializer, flatten_errors

TINY = [
    'decoder.model_dim=16', 'decoder.depth=1', 'decoder.heads=2', 'decoder.max_T=8', 'decoder.mlp_ratio=2',
    'encoder.frame_size=4', 'encoder.channels=1', 'encoder.patch_size=2', 'encoder.embed_dim=8',
    'encoder.depth=1', 'encoder.heads=2', 'encoder.n_frames=2', 'encoder.mlp_ratio=2',
    'sampling.n=2', 'training.batch_size=16', 'training.pretrain_frames=4',
]


class RunHelperTests(SimpleTestCase):
    def test_blob_hash_matches_git(self):
        with tempfile.TemporaryDirectory() as tmp:
            empty, hello = Path(tmp, 'empty'), Path(tmp, 'hello')
            empty.write_bytes(b'')
            hello.write_bytes(b'hello\n')
            self.assertEqual(blob_sha1(empty), 'e69de29bb2d1d6434b8b29ae775ad8c2e48c5391')
            self.assertEqual(blob_sha1(hello), 'ce013625030ba8dba906f756967f9e9ca394464a')
            Path(tmp, MANIFEST_FILE).write_text('{}')
            self.assertEqual(sorted(hash_directory(tmp)), ['empty', 'hello'])

    def test_merge_is_deep(self):
        base = {'training': {'lr': 1e-4, 'epochs': 50}, 'data': 'a'}
        merged = merge_config(base, {'training': {'lr': 3e-4}}, {'data': 'b'})
        self.assertEqual(merged, {'training': {'lr': 3e-4, 'epochs': 50}, 'data': 'b'})
        self.assertEqual(base['training']['lr'], 1e-4)

    def test_assignments(self):
        self.assertEqual(parse_assignment('sampling.T=6'), {'sampling': {'T': 6}})
        self.assertEqual(parse_assignment('decoder.causal=false'), {'decoder': {'causal': False}})
        self.assertEqual(parse_assignment('source=timelines'), {'source': 'timelines'})
        with self.assertRaises(ValueError):
            parse_assignment('training.lr')

    def test_manifest_must_exist(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(ValueError):
                read_manifest(tmp)

    def test_metric_differences(self):
        self.assertEqual(metric_differences({'a': 1.0, 'b': None}, {'a': 1.0, 'b': None}), [])
        self.assertEqual(len(metric_differences({'a': 1.0}, {'a': math.nextafter(1.0, 2.0)})), 1)
        self.assertEqual(metric_differences({'a': float('nan')}, {'a': float('nan')}), [])

    def test_sweep_table_layout(self):
        frame = pd.DataFrame([
            {'gap_strategy': s, 'T': t, 'cm_recall@5': i + 10 * j}
            for j, s in enumerate(['unknown', 'random', 'previous']) for i, t in enumerate([4, 6])
        ])
        axes = [['gap_strategy', ['unknown', 'random', 'previous']], ['T', [4, 6]]]
        table = sweep_table(frame, axes, 'cm_recall@5')
        self.assertEqual(list(table.index), ['unknown', 'random', 'previous'])
        self.assertEqual(list(table.columns), [4, 6])
        self.assertEqual(table.loc['previous', 6], 21)
        single = sweep_table(frame[frame.gap_strategy == 'unknown'], [['T', [4, 6]]], 'cm_recall@5')
        self.assertEqual(single.shape, (1, 2))


class SerializerTests(SimpleTestCase):
    def corpus(self, **overrides):
        data = {'k': 20, 'succ': 5, 'num': 100, 'len': 9, 'sigma': 0.25, 'seed': 0}
        data.update(overrides)
        return CorpusConfigSerializer(data=data)

    def train(self, **overrides):
        data = {'mode': 'end-to-end', 'epochs': 50, 'warmup_epochs': 20, 'cosine_epochs': 30, 'lr': '1e-4',
                'weight_decay': 4e-5, 'batch_size': 8, 'beta1': 0.9, 'beta2': 0.999, 'eps': 1e-8,
                'rec_weight': 1.0, 'pre_weight': 1.0, 'val_fraction': 0.1, 'encoder_tuning': 'full',
                'pretrain_frames': 8, 'pretrain_interval': 1, 'dtype': 'float64', 'seed': 0}
        data.update(overrides)
        return TrainConfigSerializer(data=data)

    def test_corpus_needs_two_labels(self):
        serializer = self.corpus(len=1)
        self.assertFalse(serializer.is_valid())
        self.assertIn('len', serializer.errors)

    def test_successors_bounded_by_states(self):
        self.assertFalse(self.corpus(succ=21).is_valid())
        self.assertTrue(self.corpus().is_valid())

    def test_mode_normalized(self):
        serializer = self.train()
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(serializer.validated_data['mode'], 'end_to_end')
        self.assertEqual(serializer.validated_data['lr'], 1e-4)

    def test_unknown_mode(self):
        serializer = self.train(mode='distill')
        self.assertFalse(serializer.is_valid())
        self.assertIn('mode', serializer.errors)

    def test_schedule_checked_by_config(self):
        serializer = self.train(warmup_epochs=30)
        self.assertFalse(serializer.is_valid())
        self.assertTrue(any('exceeds epochs' in line for line in flatten_errors(serializer.errors)))

    def test_unknown_sweep_parameter(self):
        serializer = SweepConfigSerializer()
        with self.assertRaises(serializers.ValidationError):
            serializer.validate_by(['lr=1,2'])
        self.assertEqual(serializer.validate_by(['T=4, 6', 'gap_strategy=Unknown,previous']),
                         [['T', [4, 6]], ['gap_strategy', ['unknown', 'previous']]])


class CommandTestCase(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)
        self.settings_override = override_settings(ARR_OUTPUT_ROOT=self.root / 'runs')
        self.settings_override.enable()
        self.data = self.gen_data('corpus')

    def tearDown(self):
        self.settings_override.disable()
        self.tmp.cleanup()

    def gen_data(self, name, **options):
        values = dict(k=6, succ=2, num=60, len=5, seed=0, videos=3, segments=12)
        values.update(options)
        output = self.root / name
        call_command('gen_data', output=str(output), stdout=StringIO(), **values)
        return output

    def train(self, mode='label-only', overrides=(), **options):
        values = dict(data=str(self.data), mode=mode, T=4, epochs=2, warmup_epochs=1, cosine_epochs=1, lr=1e-3)
        values.update(options)
        call_command('train', overrides=list(TINY) + list(overrides), stdout=StringIO(), **values)
        return ExperimentRun.objects.filter(command='train').order_by('-created_at').first()

    def assertExitCode(self, code, *args, **options):
        with self.assertRaises(CommandError) as ctx:
            call_command(*args, stdout=StringIO(), **options)
        self.assertEqual(ctx.exception.returncode, code)
        return ctx.exception


class GenDataCommandTests(CommandTestCase):
    def test_corpus_files_and_manifest(self):
        for name in ('chain.json', 'vocabulary.json', 'sequences.csv', 'annotations.csv', MANIFEST_FILE):
            self.assertTrue((self.data / name).exists(), name)
        manifest = read_manifest(self.data)
        self.assertEqual(manifest['status'], 'completed')
        self.assertEqual(manifest['metrics']['sequences'], 60)
        self.assertEqual(pd.read_csv(self.data / 'sequences.csv').sample_id.nunique(), 60)
        self.assertEqual(ExperimentRun.objects.get(command='gen_data').status, 'completed')

    def test_same_flags_same_bytes(self):
        again = self.gen_data('again')
        self.assertEqual(hash_directory(self.data), hash_directory(again))

    def test_clips_rendered(self):
        with_clips = self.gen_data('clips', clips=3, frame_size=4, channels=1, clip_frames=2)
        self.assertTrue((with_clips / 'clips.arrc').exists())

    def test_existing_directory_needs_force(self):
        self.assertExitCode(2, 'gen_data', output=str(self.data), k=6, succ=2, num=10, len=5)
        call_command('gen_data', output=str(self.data), k=6, succ=2, num=10, len=5, force=True, stdout=StringIO())
        self.assertEqual(read_manifest(self.data)['metrics']['sequences'], 10)
        self.assertFalse((self.data / 'annotations.csv').exists())

    def test_single_label_sequences_rejected(self):
        error = self.assertExitCode(2, 'gen_data', output=str(self.root / 'short'), len=1)
        self.assertIn('len: Sequences need at least 2 labels', str(error))

    def test_config_file_and_flags(self):
        config = self.root / 'gen.yaml'
        config.write_text('synthetic:\n  k: 8\n  succ: 3\n  num: 20\n  len: 4\n')
        call_command('gen_data', config=str(config), num=15, output=str(self.root / 'from_file'), stdout=StringIO())
        params = read_manifest(self.root / 'from_file')['config']['synthetic']
        self.assertEqual((params['k'], params['num'], params['len']), (8, 15, 4))


class TrainCommandTests(CommandTestCase):
    def test_label_only_run(self):
        before = hash_directory(self.data)
        run = self.train()
        run_dir = Path(run.run_dir)
        for name in ('epochs.csv', 'best.arrc', 'final.arrc', 'report.json', 'report.txt', MANIFEST_FILE):
            self.assertTrue((run_dir / name).exists(), name)
        self.assertEqual(run.status, 'completed')
        self.assertEqual(EpochRecord.objects.filter(run=run).count(), 3)
        self.assertEqual(len(pd.read_csv(run_dir / 'epochs.csv')), 3)
        manifest = read_manifest(run_dir)
        self.assertEqual(manifest['config']['training']['mode'], 'label_only')
        self.assertIn('cm_recall@5', manifest['metrics'])
        self.assertEqual(manifest['seeds']['training'], 0)
        self.assertEqual(hash_directory(self.data), before)

    def test_zero_epochs_only_evaluates(self):
        run = self.train(epochs=0)
        self.assertEqual(run.steps, 0)
        self.assertEqual(EpochRecord.objects.filter(run=run).count(), 1)

    def test_timeline_source(self):
        run = self.train(source='timelines', overrides=['sampling.gap_strategy=previous', 'sampling.tau_a=0.5'])
        self.assertEqual(run.config['source'], 'timelines')
        self.assertEqual(run.status, 'completed')

    def test_pretrain_then_end_to_end(self):
        pre = self.train('pretrain')
        self.assertIn('val_loss', pre.metrics)
        init = Path(pre.run_dir, 'final.arrc')
        scratch = self.train('end-to-end')
        warm = self.train('end-to-end', init_decoder=str(init))
        self.assertIn('recognition_top1', warm.metrics)
        self.assertIn('init_decoder', warm.data_hashes)

        out = StringIO()
        call_command('compare_runs', scratch.run_dir, warm.run_dir, stdout=out)
        self.assertIn('final_l_pre', out.getvalue())
        self.assertIn('gap', out.getvalue())

    def test_init_decoder_shape_mismatch(self):
        pre = self.train('pretrain')
        error = self.assertExitCode(
            2, 'train', data=str(self.data), mode='end-to-end', T=4, epochs=0,
            init_decoder=str(Path(pre.run_dir, 'final.arrc')), overrides=TINY + ['decoder.model_dim=32'],
        )
        self.assertIn('decoder', str(error))

    def test_invalid_config_exit_code(self):
        self.assertExitCode(2, 'train', data=str(self.data), mode='label-only', T=12, overrides=TINY)
        self.assertExitCode(2, 'train', data=str(self.root / 'missing'), mode='label-only')
        self.assertFalse(ExperimentRun.objects.filter(command='train').exists())

    def test_runtime_failure_exit_code(self):
        with mock.patch('experiments.runners.run_training', side_effect=TrainingError('loss diverged', 1, 4)):
            self.assertExitCode(3, 'train', data=str(self.data), mode='label-only', T=4, overrides=TINY)
        run = ExperimentRun.objects.get(command='train')
        self.assertEqual(run.status, 'failed')
        self.assertIn('loss diverged', read_manifest(run.run_dir)['error'])


class EvaluateCommandTests(CommandTestCase):
    def test_reports_are_repeatable(self):
        checkpoint = Path(self.train().run_dir, 'final.arrc')
        first, second = self.root / 'eval1', self.root / 'eval2'
        for run_dir in (first, second):
            call_command('evaluate', checkpoint=str(checkpoint), data=str(self.data), run_dir=str(run_dir),
                         kl_min_count=1, stdout=StringIO())
        self.assertEqual((first / 'report.json').read_text(), (second / 'report.json').read_text())
        report = json.loads((first / 'report.json').read_text())
        self.assertEqual(set(report['sections']), {'action', 'verb', 'noun'})
        self.assertIn('transition_kl', read_manifest(first)['metrics'])

    def test_vocabulary_mismatch(self):
        checkpoint = Path(self.train().run_dir, 'final.arrc')
        other = self.gen_data('other', k=7)
        self.assertExitCode(2, 'evaluate', checkpoint=str(checkpoint), data=str(other))

    def test_pretrain_checkpoint_rejected(self):
        checkpoint = Path(self.train('pretrain').run_dir, 'final.arrc')
        self.assertExitCode(2, 'evaluate', checkpoint=str(checkpoint), data=str(self.data))


class SweepCommandTests(CommandTestCase):
    def test_sweep_over_length(self):
        out = StringIO()
        call_command('sweep', data=str(self.data), mode='label-only', by=['T=2,3'], epochs=1, warmup_epochs=0,
                     cosine_epochs=1, overrides=TINY, run_dir=str(self.root / 'sweep'), stdout=out)
        sweep = ExperimentRun.objects.get(command='sweep')
        self.assertEqual(sweep.children.count(), 2)
        table = pd.read_csv(self.root / 'sweep' / 'table.csv', index_col=0)
        self.assertEqual(list(table.columns), ['2', '3'])
        seeds = {child.config['training']['seed'] for child in sweep.children.all()}
        self.assertEqual(len(seeds), 2)

    def test_strategy_by_length_grid(self):
        call_command('sweep', data=str(self.data), mode='label-only', source='timelines', epochs=0,
                     by=['gap_strategy=unknown,random,previous', 'T=2,3'], overrides=TINY,
                     run_dir=str(self.root / 'grid'), stdout=StringIO())
        table = pd.read_csv(self.root / 'grid' / 'table.csv', index_col=0)
        self.assertEqual(list(table.index), ['unknown', 'random', 'previous'])
        self.assertEqual(table.shape, (3, 2))

    def test_unknown_parameter(self):
        self.assertExitCode(2, 'sweep', data=str(self.data), mode='label-only', by=['lr=1,2'], overrides=TINY)

    def test_strategy_sweep_needs_timelines(self):
        self.assertExitCode(2, 'sweep', data=str(self.data), mode='label-only', by=['gap_strategy=unknown'],
                            overrides=TINY)


class ExtractFeaturesCommandTests(CommandTestCase):
    def extract(self, run_dir):
        call_command('extract_features', data=str(self.data), run_dir=str(run_dir), overrides=TINY, stdout=StringIO())
        return read_manifest(run_dir)

    def test_features_file_and_manifest(self):
        manifest = self.extract(self.root / 'features')
        features, metadata = load_features(self.root / 'features' / 'features.arrc')
        self.assertEqual(features.shape, (60, 4, 8))
        self.assertEqual(metadata['encoder_config']['embed_dim'], 8)
        self.assertEqual(metadata['frames'], 4)
        self.assertEqual(manifest['metrics']['feature_dim'], 8)
        self.assertIn('features.arrc', manifest['data_hashes'])
        self.assertEqual(ExperimentRun.objects.get(command='extract_features').status, 'completed')

    def test_export_reproduces(self):
        manifest = self.extract(self.root / 'features')
        call_command('reproduce', str(self.root / 'features'), run_dir=str(self.root / 'again'), stdout=StringIO())
        self.assertEqual(read_manifest(self.root / 'again')['data_hashes'], manifest['data_hashes'])

    def test_missing_corpus(self):
        self.assertExitCode(2, 'extract_features', data=str(self.root / 'missing'), overrides=TINY)


class ReproduceCommandTests(CommandTestCase):
    def test_training_run_reproduces(self):
        run = self.train()
        call_command('reproduce', run.run_dir, run_dir=str(self.root / 'again'), stdout=StringIO())
        again = read_manifest(self.root / 'again')
        self.assertEqual(again['metrics'], run.metrics)
        self.assertEqual(again['parent'], str(run.id))

    def test_corpus_reproduces(self):
        call_command('reproduce', str(self.data), run_dir=str(self.root / 'corpus_again'), stdout=StringIO())
        self.assertEqual(hash_directory(self.data), hash_directory(self.root / 'corpus_again'))

    def test_tampered_metrics_fail(self):
        run_dir = Path(self.train(epochs=0).run_dir)
        manifest = read_manifest(run_dir)
        manifest['metrics']['cm_recall@5'] = 2.0
        (run_dir / MANIFEST_FILE).write_text(json.dumps(manifest))
        error = self.assertExitCode(3, 'reproduce', str(run_dir))
        self.assertIn('cm_recall@5', str(error))

    def test_changed_inputs_rejected(self):
        run_dir = self.train(epochs=0).run_dir
        with open(self.data / 'sequences.csv', 'a') as handle:
            handle.write('59,5,0\n')
        self.assertExitCode(2, 'reproduce', run_dir)
