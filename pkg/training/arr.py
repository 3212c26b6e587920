"""Model assemblies trained by ``fit``: label-only NAP, pre-training pair, end-to-end ARR."""
import logging

import numpy as np

from encoder.exceptions import ConfigurationError
from encoder.network import ClassificationHead, recognition_head
from numerics.checkpoint import load_container
from numerics.exceptions import CheckpointError
from numerics.layers import Module
from numerics.tensor import no_grad

from .config import EncoderTuning

logger = logging.getLogger(__name__)

PRETRAIN_PROVENANCE = 'pretrain'
HEAD_PREFIX = 'classification_head.'


class LabelOnlyModel(Module):
    """Decoder fed embedded action labels instead of clip features."""

    def __init__(self, decoder):
        if decoder.cfg.input_mode != 'labels':
            raise ConfigurationError("Label-only models need a decoder with input_mode='labels'")
        self.decoder = decoder

    def __call__(self, labels):
        return self.decoder.classify(self.decoder.forward_labels(labels))

    def anticipation_logits(self, labels):
        return self(labels).data[:, -1, :]

    def trainable_parameters(self, tuning=None):
        return list(self.named_parameters())


class FeaturePredictor(Module):
    """Encoder (kept fixed) and decoder pair optimized by feature pre-training."""

    def __init__(self, encoder, decoder):
        if encoder is not None:
            _check_widths(encoder, decoder)
            self.encoder = encoder
        self.decoder = decoder

    def __call__(self, features):
        return self.decoder.predict_features(self.decoder.decoder_forward(features))

    def trainable_parameters(self, tuning=None):
        return [(f"decoder.{name}", p) for name, p in self.decoder.named_parameters()]


def encode_frames(encoder, frames, batch_size=64):
    """(B, n, 1, H, W, C) single-frame clips -> (B, n, D) features, no graph."""
    with no_grad():
        chunks = [encoder.encode_sequence(frames[i:i + batch_size]).data
                  for i in range(0, len(frames), batch_size)]
    return np.concatenate(chunks) if chunks else np.zeros((0, frames.shape[1], encoder.feature_dim))


class ARRModel(Module):
    """
    Per-clip encoder, recognition head over the clip features, and the causal
    decoder whose classification head anticipates the next action.
    """

    def __init__(self, encoder, decoder, num_classes=None, seed=0):
        _check_widths(encoder, decoder)
        num_classes = decoder.cfg.vocab_size if num_classes is None else num_classes
        self.encoder = encoder
        self.recognition_head = ClassificationHead(
            encoder.feature_dim, num_classes, np.random.default_rng(seed), encoder.cls_token.dtype,
        )
        self.decoder = decoder
        self.encoder_frozen = False

    def features(self, clips):
        if self.encoder_frozen:
            with no_grad():
                return self.encoder.encode_sequence(clips).detach()
        return self.encoder.encode_sequence(clips)

    def __call__(self, clips):
        """(B, T, n, H, W, C) -> recognition logits and NAP logits, both (B, T, K)."""
        Z = self.features(clips)
        rec = recognition_head(Z, self.recognition_head)
        nap = self.decoder.classify(self.decoder.decoder_forward(Z))
        return rec, nap

    def anticipation_logits(self, clips):
        Z = self.features(clips)
        return self.decoder.classify(self.decoder.decoder_forward(Z)).data[:, -1, :]

    def recognition_logits(self, clips):
        return recognition_head(self.features(clips), self.recognition_head).data

    def trainable_parameters(self, tuning=EncoderTuning.FULL):
        tuning = EncoderTuning(tuning)
        self.encoder_frozen = tuning is EncoderTuning.FROZEN
        if tuning is EncoderTuning.FULL:
            encoder = list(self.encoder.named_parameters())
        elif tuning is EncoderTuning.ADAPTERS:
            encoder = self.encoder.adapter_parameters()
        else:
            encoder = []
        return (
            [(f"encoder.{name}", p) for name, p in encoder]
            + [(f"recognition_head.{name}", p) for name, p in self.recognition_head.named_parameters()]
            + [(f"decoder.{name}", p) for name, p in self.decoder.named_parameters()]
        )


def _check_widths(encoder, decoder):
    if decoder.cfg.input_dim != encoder.feature_dim:
        raise ConfigurationError(
            f"Decoder input_dim {decoder.cfg.input_dim} does not match encoder feature dim {encoder.feature_dim}"
        )


def _untrained_head(state, decoder):
    """
    Pre-training never updates the classification head, and its width follows
    the fine-tuning vocabulary; a head of another width keeps the model's own
    initialization.
    """
    own = {name: p.data for name, p in decoder.named_parameters() if name.startswith(HEAD_PREFIX)}
    stored = {name: a for name, a in state.items() if name.startswith(HEAD_PREFIX)}
    if stored and any(np.shape(a) != np.shape(own.get(name)) for name, a in stored.items()):
        logger.info(f"Keeping a fresh classification head: the checkpoint's does not fit "
                    f"{decoder.cfg.vocab_size} classes")
        state = {name: a for name, a in state.items() if name not in stored}
        state.update(own)
    return state


def init_from_pretrain(model, path):
    """
    Load encoder and decoder weights from a pre-training checkpoint into an
    end-to-end model; every shape mismatch is reported in one error.
    """
    arrays, metadata = load_container(path)
    if metadata.get('provenance') != PRETRAIN_PROVENANCE:
        raise CheckpointError(f"{path} was not produced by pre-training (provenance {metadata.get('provenance')!r})")
    mismatches = []
    for prefix, part in (('encoder.', model.encoder), ('decoder.', model.decoder)):
        state = {name[len(prefix):]: a for name, a in arrays.items() if name.startswith(prefix)}
        if part is model.decoder:
            state = _untrained_head(state, part)
        try:
            part.load_state_dict(state)
        except CheckpointError as exc:
            mismatches.extend(f"{prefix.rstrip('.')}: {m}" for m in exc.mismatches)
    if mismatches:
        raise CheckpointError(f"{path} is incompatible with the model", mismatches)
    logger.info(f"Initialized encoder and decoder from pre-training checkpoint {path}")
    return metadata
