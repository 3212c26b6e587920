"""
Sample sources for the three training modes. Clips and frames are rendered on
demand from per-item derived seeds, so every item is reproducible on its own;
clips stored with a corpus take the place of rendered ones.
"""
import logging

import numpy as np

from corpus.rendering import DEFAULT_SIGMA, class_template
from corpus.seeding import derive_seed, index_hash

logger = logging.getLogger(__name__)


def split_indices(count, val_fraction, seed):
    """
    Seeded-hash split: item i is held out iff hash(seed, i) < val_fraction,
    so membership never depends on the corpus size or ordering.
    """
    index = np.arange(count)
    if not val_fraction:
        return index, index[:0]
    held_out = np.array([index_hash(seed, i) < val_fraction for i in range(count)], dtype=bool)
    return index[~held_out], index[held_out]


class LabelSequences:
    """Rows of T+1 action ids: T observed labels followed by the anticipation target."""

    def __init__(self, labels, vocab_size):
        labels = np.asarray(labels, dtype=np.int64)
        if labels.ndim != 2 or labels.shape[1] < 2:
            raise ValueError(f"Label sequences must be (M, T+1) with T >= 1, got {labels.shape}")
        if labels.size and (labels.min() < 0 or labels.max() >= vocab_size):
            raise ValueError(f"Labels fall outside a vocabulary of {vocab_size}")
        self.labels = labels
        self.vocab_size = vocab_size

    def __len__(self):
        return len(self.labels)

    @property
    def T(self):
        return self.labels.shape[1] - 1

    def __getitem__(self, indices):
        return self.labels[indices]

    @classmethod
    def from_sequences(cls, sequences, T, vocab_size):
        sequences = np.asarray(sequences)
        if sequences.shape[1] < T + 1:
            raise ValueError(f"Corpus sequences have length {sequences.shape[1]}, need T+1 = {T + 1}")
        return cls(sequences[:, :T + 1], vocab_size)

    @classmethod
    def from_samples(cls, samples, vocab_size):
        return cls(np.array([s.labels for s in samples], dtype=np.int64).reshape(len(samples), -1), vocab_size)


class ClipRenderer:
    """
    Observed clips for label rows: one clip per observed position. Clips
    stored with the corpus are used for the sequences they cover when their
    frame shape fits; every other clip is rendered from a derived seed.
    """

    def __init__(self, frame_size, channels, n, sigma=DEFAULT_SIGMA, template_seed=0, unknown_id=None, seed=0,
                 stored=None):
        self.frame_size = frame_size
        self.channels = channels
        self.n = n
        self.sigma = sigma
        self.unknown_id = unknown_id
        self.seed = seed
        self.template_seed = template_seed
        self.stored = self._usable(stored)
        self._templates = {}

    def _usable(self, stored):
        if stored is None:
            return None
        stored = np.asarray(stored)
        frame = (self.frame_size, self.frame_size, self.channels)
        if stored.ndim != 6 or stored.shape[2] < self.n or tuple(stored.shape[3:]) != frame:
            logger.warning(f"Ignoring stored clips of shape {stored.shape}: need (M, L, >={self.n}, *{frame})")
            return None
        logger.info(f"Using {len(stored)} stored clip sequences")
        return stored

    def _template(self, action):
        if action not in self._templates:
            self._templates[action] = class_template(action, self.frame_size, self.frame_size,
                                                     self.channels, self.template_seed)
        return self._templates[action]

    def clip(self, action, *keys):
        rng = np.random.default_rng(derive_seed(self.seed, *keys))
        shape = (self.n, self.frame_size, self.frame_size, self.channels)
        if self.unknown_id is not None and action == self.unknown_id:
            return rng.random(shape)
        return np.clip(self._template(action)[None] + self.sigma * rng.normal(size=shape), 0.0, 1.0)

    def render(self, sample_index, observed):
        """(T,) observed labels of one sample -> (T, n, H, W, C)."""
        if self.stored is not None and sample_index < len(self.stored) and len(observed) <= self.stored.shape[1]:
            return self.stored[sample_index, :len(observed), :self.n]
        return np.stack([self.clip(int(a), int(sample_index), t) for t, a in enumerate(observed)])

    def render_batch(self, sample_indices, observed):
        return np.stack([self.render(i, row) for i, row in zip(sample_indices, observed)])


class UnlabeledVideoSource:
    """
    Synthetic unlabelled videos: video m shows ``frames_per_action`` noisy
    frames of each action in corpus sequence m. Pre-training reads ``n``
    frames spaced ``interval`` apart and treats each as a single-frame clip.
    """

    def __init__(self, sequences, frame_size, channels, frames_per_action=4,
                 sigma=DEFAULT_SIGMA, template_seed=0, seed=0):
        self.sequences = np.asarray(sequences)
        self.renderer = ClipRenderer(frame_size, channels, 1, sigma, template_seed, seed=seed)
        self.frames_per_action = frames_per_action
        self.seed = seed

    def __len__(self):
        return len(self.sequences)

    @property
    def video_length(self):
        return self.sequences.shape[1] * self.frames_per_action

    def frame(self, video, j):
        action = int(self.sequences[video, j // self.frames_per_action])
        return self.renderer.clip(action, 'frame', video, j)

    def sample(self, video, n, interval):
        """(n, 1, H, W, C): frames offset, offset+interval, ... from one video."""
        span = (n - 1) * interval + 1
        if span > self.video_length:
            raise ValueError(f"{n} frames at interval {interval} do not fit in a {self.video_length}-frame video")
        rng = np.random.default_rng(derive_seed(self.seed, 'offset', video))
        offset = int(rng.integers(self.video_length - span + 1))
        return np.stack([self.frame(video, offset + i * interval) for i in range(n)])

    def sample_batch(self, videos, n, interval):
        return np.stack([self.sample(int(v), n, interval) for v in videos])
