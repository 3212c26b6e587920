"""
Assembly of a training run from a corpus and validated configs: label data,
models, objective and the call to ``fit``. Checkpoints carry every config
needed to rebuild their model.
"""
import logging
from dataclasses import dataclass

import numpy as np

from corpus.rendering import DEFAULT_SIGMA
from corpus.sampling import SamplingConfig, build_samples, vocabulary_for
from corpus.seeding import derive_seed
from corpus.vocabulary import ActionVocabulary
from decoder.config import DecoderConfig
from decoder.exceptions import ConfigurationError, VocabularyMismatchError
from decoder.network import CausalDecoder
from encoder.config import EncoderConfig
from encoder.network import ToyVideoEncoder
from metrics.evaluation import DEFAULT_KS, add_chain_diagnostics, evaluate
from numerics.checkpoint import load_checkpoint, read_metadata
from numerics.tensor import no_grad

from .arr import ARRModel, LabelOnlyModel, init_from_pretrain
from .config import TrainConfig, TrainingMode
from .datasets import ClipRenderer, LabelSequences, UnlabeledVideoSource, split_indices
from .losses import nap_targets
from .objectives import ARRObjective, LabelOnlyObjective
from .pretrain import extract_features, pretrain_decoder, save_features
from .trainer import fit

logger = logging.getLogger(__name__)

SOURCES = ('sequences', 'timelines')


@dataclass
class RunSpec:
    train: TrainConfig
    encoder: EncoderConfig
    decoder: dict
    sampling: object
    source: str = 'sequences'
    init_decoder: str = None

    def to_dict(self):
        return {
            'train': self.train.to_dict(),
            'encoder': self.encoder.to_dict(),
            'decoder': dict(self.decoder),
            'sampling': self.sampling.to_dict(),
            'source': self.source,
            'init_decoder': self.init_decoder,
        }


@dataclass
class TrainingOutcome:
    result: object
    model: object
    vocab: ActionVocabulary
    data: LabelSequences
    train_indices: object
    val_indices: object
    objective: object = None


def label_data(corpus, sampling, source='sequences'):
    """(LabelSequences, vocabulary) for T = sampling.T."""
    if source not in SOURCES:
        raise ConfigurationError(f"source must be one of {SOURCES}, got '{source}'")
    if source == 'timelines':
        if not corpus.records:
            raise ConfigurationError("Corpus has no annotated timelines; regenerate it with --videos")
        vocab = vocabulary_for(sampling.gap_strategy, corpus.vocabulary)
        samples = build_samples(corpus.records, sampling, corpus.vocabulary).samples
        if not samples:
            raise ConfigurationError("No anticipation samples could be built from the timelines")
        return LabelSequences.from_samples(samples, vocab.size), vocab
    vocab = corpus.vocabulary.without_unknown()
    if corpus.sequences.shape[1] < sampling.T + 1:
        raise ConfigurationError(
            f"Corpus sequences have length {corpus.sequences.shape[1]}; T={sampling.T} needs {sampling.T + 1}"
        )
    return LabelSequences.from_sequences(corpus.sequences, sampling.T, vocab.size), vocab


def decoder_config(spec, vocab_size):
    values = {**spec.decoder, 'input_dim': spec.encoder.embed_dim, 'vocab_size': vocab_size,
              'input_mode': 'labels' if spec.train.mode is TrainingMode.LABEL_ONLY else 'features'}
    cfg = DecoderConfig.from_dict(values)
    if spec.sampling.T > cfg.max_T:
        raise ConfigurationError(f"T={spec.sampling.T} exceeds the decoder's max_T={cfg.max_T}")
    return cfg


def build_model(mode, encoder_cfg, dec_cfg, dtype='float64'):
    decoder = CausalDecoder(dec_cfg, dtype=dtype)
    if TrainingMode(mode) is TrainingMode.LABEL_ONLY:
        return LabelOnlyModel(decoder)
    return ARRModel(ToyVideoEncoder(encoder_cfg, dtype=dtype), decoder, seed=derive_seed(encoder_cfg.seed, 'head'))


def clip_renderer(corpus, spec, vocab):
    return ClipRenderer(
        spec.encoder.frame_size, spec.encoder.channels, spec.sampling.n,
        sigma=corpus.params.get('sigma', DEFAULT_SIGMA),
        template_seed=corpus.params.get('seed', 0),
        unknown_id=vocab.unknown_id,
        seed=derive_seed(spec.sampling.seed, 'clips'),
        stored=corpus.clips if spec.source == 'sequences' else None,
    )


def unlabeled_source(corpus, encoder_cfg, train_cfg):
    return UnlabeledVideoSource(
        corpus.sequences, encoder_cfg.frame_size, encoder_cfg.channels,
        sigma=corpus.params.get('sigma', DEFAULT_SIGMA),
        template_seed=corpus.params.get('seed', 0),
        seed=derive_seed(train_cfg.seed, 'videos'),
    )


def export_features(corpus, encoder_cfg, train_cfg, path):
    """
    Encode every corpus sequence as a video with a freshly initialized
    encoder, exactly as pre-training does, and store the (M, n, D) features.
    Returns the features and the written path.
    """
    encoder = ToyVideoEncoder(encoder_cfg, dtype=train_cfg.dtype)
    source = unlabeled_source(corpus, encoder_cfg, train_cfg)
    n, interval = train_cfg.pretrain_frames, train_cfg.pretrain_interval
    features = extract_features(source, encoder, n, interval)
    path = save_features(path, features, {
        'encoder_config': encoder_cfg.to_dict(),
        'frames': n,
        'interval': interval,
        'seed': train_cfg.seed,
    })
    return features, path


def checkpoint_metadata(spec, vocab, dec_cfg):
    return {
        'encoder_config': spec.encoder.to_dict(),
        'decoder_config': dec_cfg.to_dict(),
        'sampling': spec.sampling.to_dict(),
        'source': spec.source,
        'vocabulary': vocab.to_dict(),
    }


def run_training(corpus, spec, run_dir=None, progress=False):
    cfg = spec.train
    data, vocab = label_data(corpus, spec.sampling, spec.source)
    dec_cfg = decoder_config(spec, vocab.size)
    model = build_model(cfg.mode, spec.encoder, dec_cfg, cfg.dtype)
    metadata = checkpoint_metadata(spec, vocab, dec_cfg)

    if cfg.mode is TrainingMode.PRETRAIN:
        source = unlabeled_source(corpus, spec.encoder, cfg)
        result = pretrain_decoder(source, model.encoder, model.decoder, cfg, run_dir=run_dir, progress=progress,
                                  metadata=metadata)
        return TrainingOutcome(result, model, vocab, data, None, None)

    train, val = split_indices(len(data), cfg.val_fraction, derive_seed(cfg.seed, 'split'))
    if cfg.mode is TrainingMode.LABEL_ONLY:
        objective = LabelOnlyObjective(model, data, train, val, cfg, vocab)
    else:
        if spec.init_decoder:
            metadata['init_decoder'] = str(spec.init_decoder)
            init_from_pretrain(model, spec.init_decoder)
        objective = ARRObjective(model, data, clip_renderer(corpus, spec, vocab), train, val, cfg, vocab)
    metadata['provenance'] = cfg.mode.value
    result = fit(objective, cfg, run_dir, metadata=metadata, progress=progress)
    return TrainingOutcome(result, model, vocab, data, train, val, objective)


def load_model(checkpoint_path):
    """Rebuild the model stored in a training checkpoint; returns (model, metadata)."""
    metadata = read_metadata(checkpoint_path)
    for key in ('encoder_config', 'decoder_config', 'train_config', 'vocabulary'):
        if key not in metadata:
            raise ConfigurationError(f"{checkpoint_path} does not record its {key}")
    train_cfg = TrainConfig.from_dict(metadata['train_config'])
    if train_cfg.mode is TrainingMode.PRETRAIN:
        raise ConfigurationError(
            f"{checkpoint_path} is a pre-training checkpoint with no trained anticipation head; "
            f"pass it to end-to-end training as the decoder initialization"
        )
    model = build_model(train_cfg.mode, EncoderConfig.from_dict(metadata['encoder_config']),
                        DecoderConfig.from_dict(metadata['decoder_config']), train_cfg.dtype)
    load_checkpoint(checkpoint_path, model)
    return model, metadata


def evaluate_checkpoint(checkpoint_path, corpus, split='val', ks=DEFAULT_KS, kl_min_count=1000):
    """
    MetricReport of a stored model on ``corpus``. The labels are rebuilt with
    the sampling settings recorded in the checkpoint; ``split='val'`` scores
    the same held-out items training validated on.
    """
    model, metadata = load_model(checkpoint_path)
    train_cfg = TrainConfig.from_dict(metadata['train_config'])
    sampling = SamplingConfig(**metadata['sampling'])
    source = metadata.get('source', 'sequences')
    data, vocab = label_data(corpus, sampling, source)
    stored = ActionVocabulary.from_dict(metadata['vocabulary'])
    if stored != vocab:
        raise VocabularyMismatchError(
            f"{checkpoint_path} was trained on {stored.size} classes ({stored.num_actions} actions); "
            f"this corpus yields {vocab.size} ({vocab.num_actions} actions)"
        )

    indices = np.arange(len(data))
    if split == 'val':
        held_out = split_indices(len(data), train_cfg.val_fraction, derive_seed(train_cfg.seed, 'split'))[1]
        if len(held_out):
            indices = held_out
        else:
            logger.warning("The checkpoint was trained without a validation split; evaluating on every sample")

    if train_cfg.mode is TrainingMode.LABEL_ONLY:
        objective = LabelOnlyObjective(model, data, indices, indices, train_cfg, vocab)
    else:
        spec = RunSpec(train_cfg, EncoderConfig.from_dict(metadata['encoder_config']), metadata['decoder_config'],
                       sampling, source)
        objective = ARRObjective(model, data, clip_renderer(corpus, spec, vocab), indices, indices, train_cfg, vocab)
    report = evaluate(model, objective.eval_batches(indices), vocab, ks)

    if train_cfg.mode is TrainingMode.LABEL_ONLY and source == 'sequences':
        inputs = nap_targets(data[indices])[0]
        with no_grad():
            logits = np.concatenate([model(inputs[i:i + 256]).data for i in range(0, len(inputs), 256)])
        add_chain_diagnostics(report, logits, inputs, corpus.chain, ks, kl_min_count)
    logger.info(f"Evaluated {checkpoint_path} on {len(indices)} samples ({split})")
    return report, metadata
