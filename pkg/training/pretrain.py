"""
Unsupervised decoder pre-training: regress the next frame's feature from the
features of the frames so far, with the encoder held fixed.

Encoded features can be stored in the parameter container format and fed back
to ``fit_feature_prediction`` for decoder experiments without the encoder.
"""
import logging
from pathlib import Path

import numpy as np

from corpus.seeding import derive_seed
from numerics.checkpoint import load_container, save_container
from numerics.exceptions import CheckpointError

from .arr import PRETRAIN_PROVENANCE, FeaturePredictor, encode_frames
from .datasets import split_indices
from .objectives import FeaturePredictionObjective
from .trainer import fit

logger = logging.getLogger(__name__)

FEATURES_KIND = 'encoder_features'


def extract_features(source, encoder, n, interval, chunk=64):
    """Encode n single-frame clips per video -> (M, n, D)."""
    parts = []
    for start in range(0, len(source), chunk):
        videos = range(start, min(start + chunk, len(source)))
        parts.append(encode_frames(encoder, source.sample_batch(videos, n, interval)))
    return np.concatenate(parts)


def save_features(path, features, metadata=None):
    """
    Store (M, n, D) encoder features as one ``features`` tensor.

    Args:
        path: Container file to write
        features: Feature sequences, one row per video
        metadata: Provenance to record (encoder config, frames, interval)

    Returns:
        Path: The written file
    """
    features = np.asarray(features)
    if features.ndim != 3:
        raise ValueError(f"Features must be (M, n, D), got {features.shape}")
    metadata = {**(metadata or {}), 'kind': FEATURES_KIND}
    path = save_container(path, {'features': features}, metadata)
    logger.info(f"Saved {features.shape[0]} feature sequences of {features.shape[1]} x {features.shape[2]} to {path}")
    return path


def load_features(path):
    """Returns ``(features, metadata)`` from a file written by ``save_features``."""
    arrays, metadata = load_container(path)
    if metadata.get('kind') != FEATURES_KIND or 'features' not in arrays:
        raise CheckpointError(f"{path} does not hold encoder features (kind {metadata.get('kind')!r})")
    return arrays['features'], metadata


def fit_feature_prediction(features, decoder, cfg, encoder=None, run_dir=None, progress=False, metadata=None):
    """
    Train ``decoder`` (trunk plus feature head) on precomputed (M, n, D)
    features, given as an array or as a file written by ``save_features``.
    """
    if isinstance(features, (str, Path)):
        features, stored = load_features(features)
        metadata = {'features': stored, **(metadata or {})}
    features = np.asarray(features)
    if features.ndim != 3 or features.shape[1] < 2:
        raise ValueError(f"Need (M, n>=2, D) features, got {features.shape}")
    train, val = split_indices(len(features), cfg.val_fraction, derive_seed(cfg.seed, 'split'))
    model = FeaturePredictor(encoder, decoder)
    objective = FeaturePredictionObjective(model, features, train, val, cfg)
    metadata = {**(metadata or {}), 'provenance': PRETRAIN_PROVENANCE}
    return fit(objective, cfg, run_dir, metadata=metadata, progress=progress)


def pretrain_decoder(source, encoder, decoder, cfg, run_dir=None, progress=False, metadata=None):
    """
    Pre-train ``decoder`` on unlabelled videos from ``source``. The encoder is
    never updated; the saved checkpoints hold both so end-to-end training can
    start from them.
    """
    n, interval = cfg.pretrain_frames, cfg.pretrain_interval
    if n < 2:
        raise ValueError("Pre-training needs n >= 2 frames per video")
    logger.info(f"Encoding {len(source)} unlabelled videos ({n} frames every {interval})")
    features = extract_features(source, encoder, n, interval)
    return fit_feature_prediction(features, decoder, cfg, encoder=encoder, run_dir=run_dir, progress=progress,
                                  metadata=metadata)
