"""
Command workflows shared by the management commands and ``reproduce``.

Each runner validates its configuration before touching the filesystem,
creates its run directory, registers the run and writes the manifest.
Configs stored in a manifest are the validated ones, so feeding a manifest's
config back into the same runner re-executes the run.
"""
import copy
import itertools
import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd
from django.conf import settings

from corpus.exceptions import ReducibleChainError
from corpus.markov import bayes_topk_recall, gen_label_sequences, gen_markov_chain
from corpus.rendering import render_clip
from corpus.seeding import derive_seed
from corpus.storage import (
    ANNOTATIONS_FILE, CHAIN_FILE, CLIPS_FILE, CORPUS_FILE, SEQUENCES_FILE, VOCABULARY_FILE,
    SyntheticCorpus, load_corpus, save_corpus,
)
from corpus.timelines import gen_annotated_timelines
from corpus.vocabulary import ActionVocabulary
from encoder.config import EncoderConfig
from training.config import TrainConfig
from training.pipelines import evaluate_checkpoint, export_features, run_training

from .exceptions import ManifestError, OutputDirectoryError, ReproducibilityError
from .models import ExperimentRun
from .runs import MANIFEST_FILE, blob_sha1, hash_directory, make_run_dir, read_manifest
from .serializers import (
    CorpusConfigSerializer, EvaluateConfigSerializer, ExtractFeaturesConfigSerializer, RunConfigSerializer,
    SweepConfigSerializer,
)
from .services import ExperimentService, plain, scalar_metrics

logger = logging.getLogger(__name__)

CORPUS_FILES = (CORPUS_FILE, CHAIN_FILE, VOCABULARY_FILE, SEQUENCES_FILE, CLIPS_FILE, ANNOTATIONS_FILE, MANIFEST_FILE)
FEATURES_FILE = 'features.arrc'
SWEEP_LOG = 'sweep.csv'
SWEEP_TABLE = 'table.csv'


def _output_root():
    return Path(settings.ARR_OUTPUT_ROOT)


def _validated(serializer_class, config):
    serializer = serializer_class(data=config)
    serializer.is_valid(raise_exception=True)
    return serializer


def _input_hashes(data_dir, **files):
    hashes = {f"data/{name}": digest for name, digest in hash_directory(data_dir).items()}
    hashes.update({key: blob_sha1(path) for key, path in files.items() if path})
    return hashes


def _parent_of(manifest):
    return ExperimentRun.objects.filter(id=manifest.get('id')).first()


# ------------------------------------------------------------------ gen_data
def generate_corpus(params):
    """SyntheticCorpus for validated generation parameters."""
    seed = params['seed']
    chain = gen_markov_chain(params['k'], params['succ'], seed)
    vocab = ActionVocabulary.synthetic(params['k'])
    sequences = gen_label_sequences(chain, params['len'], params['num'], seed)

    clips = None
    if params['clips']:
        size = params['frame_size']
        clips = np.stack([
            np.stack([
                render_clip(int(action), params['clip_frames'], size, size, derive_seed(seed, 'clip', i, t),
                            channels=params['channels'], sigma=params['sigma'], template_seed=seed).frames
                for t, action in enumerate(sequences[i])
            ])
            for i in range(params['clips'])
        ])

    records = None
    if params['videos']:
        records = gen_annotated_timelines(chain, vocab, params['videos'], params['segments'],
                                          derive_seed(seed, 'timelines'))
    return SyntheticCorpus(chain, vocab, sequences, dict(params), clips, records)


def _prepare_output(output, force):
    output = Path(output)
    if output.exists() and any(output.iterdir()):
        if not force:
            raise OutputDirectoryError(f"{output} is not empty; pass --force to overwrite it")
        for name in CORPUS_FILES:
            (output / name).unlink(missing_ok=True)
        logger.warning(f"Overwriting the corpus in {output}")
    output.mkdir(parents=True, exist_ok=True)
    return output


def run_gen_data(config, output=None, force=False, parent=None):
    """
    Generate a synthetic corpus into ``output`` (default: a new run directory).
    The corpus directory is the run directory and holds the manifest.
    """
    params = plain(_validated(CorpusConfigSerializer, config['synthetic']).validated_data)
    output = _prepare_output(output, force) if output else make_run_dir(_output_root(), 'gen_data')
    service = ExperimentService('gen_data', output, parent=parent)
    service.start({'synthetic': params}, seeds={'corpus': params['seed']}, paths={'output': output})
    try:
        corpus = generate_corpus(params)
        save_corpus(output, corpus)
    except Exception as exc:
        service.fail(exc)
        raise

    metrics = {'sequences': len(corpus.sequences), 'records': len(corpus.records or [])}
    for k in (1, 5):
        try:
            metrics[f"bayes_cm_recall@{k}"] = bayes_topk_recall(corpus.chain, k).class_mean
        except ReducibleChainError as exc:
            logger.warning(f"No optimal recall@{k} reference for this chain: {exc}")
    service.complete(metrics, data_hashes=hash_directory(output))
    logger.info(f"Corpus written to {output}")
    return service.run, corpus


# ------------------------------------------------------------------ train
def run_train(config, run_dir=None, progress=False, parent=None):
    serializer = _validated(RunConfigSerializer, config)
    spec = serializer.to_run_spec()
    validated = plain(serializer.validated_data)
    mode = spec.train.mode.value
    if run_dir is None:
        run_dir = make_run_dir(_output_root(), 'train', mode)
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)

    service = ExperimentService('train', run_dir, mode, parent)
    service.start(
        validated,
        seeds={section: validated[section]['seed'] for section in ('encoder', 'decoder', 'sampling', 'training')},
        data_hashes=_input_hashes(validated['data'], init_decoder=validated['init_decoder']),
        paths={'data': validated['data'], 'init_decoder': validated['init_decoder']},
    )
    try:
        corpus = load_corpus(validated['data'])
        outcome = run_training(corpus, spec, run_dir, progress=progress)
        service.record_epochs(outcome.result.history)
    except Exception as exc:
        service.fail(exc)
        raise

    result = outcome.result
    metrics = scalar_metrics(result.final_metrics)
    metrics.update({f"train_{key}": result.final(key) for key in ('l_rec', 'l_pre', 'l_total')})
    metrics['best_epoch'] = result.best_epoch
    report = result.final_metrics.get('report')
    if report is not None:
        report.write(run_dir)
    service.complete(metrics, steps=result.steps,
                     paths={name: path for name, path in result.paths.items()})
    return service.run, outcome


# ------------------------------------------------------------------ evaluate
def report_metrics(report):
    """Flat {'action.top1': ..., 'transition_kl': ...} view of a MetricReport."""
    metrics = {f"{section}.{key}": value for section, values in report.sections.items() for key, value in values.items()}
    metrics.update(report.extras)
    return scalar_metrics(metrics)


def run_evaluate(config, run_dir=None, parent=None):
    validated = plain(_validated(EvaluateConfigSerializer, config).validated_data)
    if run_dir is None:
        run_dir = make_run_dir(_output_root(), 'evaluate')
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)

    service = ExperimentService('evaluate', run_dir, parent=parent)
    service.start(
        validated,
        data_hashes=_input_hashes(validated['data'], checkpoint=validated['checkpoint']),
        paths={'data': validated['data'], 'checkpoint': validated['checkpoint']},
    )
    try:
        report, metadata = evaluate_checkpoint(
            validated['checkpoint'], load_corpus(validated['data']), validated['split'],
            tuple(validated['ks']), validated['kl_min_count'],
        )
    except Exception as exc:
        service.fail(exc)
        raise
    service.run.mode = metadata.get('mode', '')
    files = report.write(run_dir)
    service.complete(report_metrics(report), paths={'reports': [str(f) for f in files]})
    return service.run, report


# ------------------------------------------------------------------ extract_features
def run_extract_features(config, run_dir=None, parent=None):
    """
    Encode the corpus videos with a freshly initialized encoder and write the
    (M, n, D) features to ``features.arrc`` for decoder-only experiments.
    """
    validated = plain(_validated(ExtractFeaturesConfigSerializer, config).validated_data)
    if run_dir is None:
        run_dir = make_run_dir(_output_root(), 'extract_features')
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)

    service = ExperimentService('extract_features', run_dir, parent=parent)
    service.start(
        validated,
        seeds={section: validated[section]['seed'] for section in ('encoder', 'training')},
        data_hashes=_input_hashes(validated['data']),
        paths={'data': validated['data']},
    )
    try:
        features, path = export_features(
            load_corpus(validated['data']), EncoderConfig(**validated['encoder']),
            TrainConfig(**validated['training']), run_dir / FEATURES_FILE,
        )
    except Exception as exc:
        service.fail(exc)
        raise
    videos, frames, dim = features.shape
    service.complete({'videos': videos, 'frames': frames, 'feature_dim': dim},
                     paths={'features': path}, data_hashes={FEATURES_FILE: blob_sha1(path)})
    return service.run, features


# ------------------------------------------------------------------ sweep
def sweep_cells(axes):
    """[(label, {parameter: value}), ...] over the cartesian grid of ``axes``."""
    names = [name for name, _ in axes]
    cells = []
    for values in itertools.product(*[values for _, values in axes]):
        assignment = dict(zip(names, values))
        cells.append(('__'.join(f"{k}={v}" for k, v in assignment.items()), assignment))
    return cells


def sweep_table(frame, axes, metric):
    """Pivot: the last axis across columns, the others down the rows, in the order given."""
    if metric not in frame.columns:
        raise ValueError(f"Metric '{metric}' was not produced by the sweep runs")
    names = [name for name, _ in axes]
    *row_axes, (column_name, column_values) = axes
    if not row_axes:
        table = frame.set_index(column_name)[[metric]].T
        return table.reindex(columns=column_values)
    table = frame.set_index(names)[metric].unstack(column_name)
    if len(row_axes) == 1:
        rows = pd.Index(row_axes[0][1], name=row_axes[0][0])
    else:
        rows = pd.MultiIndex.from_product([values for _, values in row_axes], names=[name for name, _ in row_axes])
    return table.reindex(index=rows, columns=column_values)


def run_sweep(config, run_dir=None, progress=False):
    """
    One training run per grid cell, each in ``cells/<label>``. Model seeds
    are shared by every cell; the training seed is derived from the cell.
    """
    validated = plain(_validated(SweepConfigSerializer, config).validated_data)
    axes = validated.pop('by')
    metric = validated.pop('metric')
    base = validated
    if run_dir is None:
        run_dir = make_run_dir(_output_root(), 'sweep')
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)

    cells = sweep_cells(axes)
    service = ExperimentService('sweep', run_dir, base['training']['mode'])
    service.start(
        {**base, 'by': [f"{name}={','.join(str(v) for v in values)}" for name, values in axes], 'metric': metric},
        seeds={'training': base['training']['seed']},
        data_hashes=_input_hashes(base['data']),
        paths={'data': base['data']},
    )
    rows, steps = [], 0
    try:
        for label, assignment in cells:
            cell = copy.deepcopy(base)
            cell['sampling'].update(assignment)
            cell['training']['seed'] = derive_seed(base['training']['seed'], label) % 2 ** 31
            logger.info(f"Sweep cell {label} ({len(rows) + 1}/{len(cells)})")
            run, _ = run_train(cell, run_dir / 'cells' / label, progress, parent=service.run)
            rows.append({**assignment, **run.metrics, 'run_dir': run.run_dir})
            steps += run.steps
        frame = pd.DataFrame(rows)
        frame.to_csv(run_dir / SWEEP_LOG, index=False, float_format='%.17g')
        table = sweep_table(frame, axes, metric)
        table.to_csv(run_dir / SWEEP_TABLE, float_format='%.17g')
        (run_dir / 'table.txt').write_text(f"{metric}\n{table.to_string(float_format=lambda x: f'{x:.4f}')}\n")
    except Exception as exc:
        service.fail(exc)
        raise
    service.complete({label: row.get(metric) for (label, _), row in zip(cells, rows)}, steps=steps,
                     paths={'log': run_dir / SWEEP_LOG, 'table': run_dir / SWEEP_TABLE})
    return service.run, table


# ------------------------------------------------------------------ reproduce
def metric_differences(expected, actual):
    """Keys whose values differ; NaN matches NaN, everything else must be identical."""
    differences = []
    for key in sorted(set(expected) | set(actual)):
        a, b = expected.get(key), actual.get(key)
        same = a == b or (isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b))
        if not same:
            differences.append(f"{key}: recorded {a!r}, reproduced {b!r}")
    return differences


def _check_inputs(manifest):
    config = manifest['config']
    data = config.get('data')
    if not data:
        return
    recorded = {k[len('data/'):]: v for k, v in manifest.get('data_hashes', {}).items() if k.startswith('data/')}
    if not Path(data).exists():
        raise ManifestError(f"Input corpus {data} no longer exists")
    current = hash_directory(data)
    changed = sorted(name for name in set(recorded) | set(current) if recorded.get(name) != current.get(name))
    if changed:
        raise ManifestError(f"Input corpus {data} changed since the run: {', '.join(changed)}")


def reproduce(source, run_dir=None, progress=False):
    """
    Re-execute the run recorded in ``source``'s manifest into a fresh run
    directory and check its metrics bitwise. Returns (manifest, new run).
    """
    manifest = read_manifest(source)
    command = manifest['command']
    if manifest.get('status') != 'completed':
        raise ManifestError(f"{source} records a {manifest.get('status')} run; only completed runs can be reproduced")
    parent = _parent_of(manifest)
    _check_inputs(manifest)
    if run_dir is None:
        run_dir = make_run_dir(_output_root(), 'reproduce', command)

    if command == 'gen_data':
        run, _ = run_gen_data(manifest['config'], output=run_dir, force=True, parent=parent)
        differences = metric_differences(manifest['data_hashes'], run.data_hashes)
    elif command == 'train':
        run, _ = run_train(manifest['config'], run_dir, progress, parent=parent)
        differences = metric_differences(manifest['metrics'], run.metrics)
    elif command == 'evaluate':
        run, _ = run_evaluate(manifest['config'], run_dir, parent=parent)
        differences = metric_differences(manifest['metrics'], run.metrics)
    elif command == 'extract_features':
        run, _ = run_extract_features(manifest['config'], run_dir, parent=parent)
        differences = metric_differences(manifest['data_hashes'], run.data_hashes)
    elif command == 'sweep':
        run, _ = run_sweep(manifest['config'], run_dir, progress)
        differences = metric_differences(manifest['metrics'], run.metrics)
    else:
        raise ManifestError(f"Cannot reproduce a '{command}' run")

    if differences:
        raise ReproducibilityError(f"Run in {run.run_dir} did not reproduce {source}", differences)
    logger.info(f"Reproduced {source} in {run.run_dir}: {len(manifest.get('metrics', {}))} metrics identical")
    return manifest, run


# ------------------------------------------------------------------ compare
def compare_runs(first, second):
    """
    Side-by-side final metrics of two runs with the gap second - first.
    Training runs also contribute their final-epoch losses.
    """
    columns = []
    for source in (first, second):
        manifest = read_manifest(source)
        metrics = dict(manifest.get('metrics', {}))
        epochs = Path(source) / 'epochs.csv'
        if epochs.exists():
            last = pd.read_csv(epochs).iloc[-1]
            metrics.update({f"final_{key}": float(last[key]) for key in ('l_rec', 'l_pre', 'l_total') if key in last})
        columns.append(pd.Series(metrics, dtype=object))
    table = pd.concat(columns, axis=1, keys=['first', 'second'])
    numeric = table.apply(pd.to_numeric, errors='coerce')
    table['gap'] = numeric['second'] - numeric['first']
    table.index.name = 'metric'
    return table.sort_index()
