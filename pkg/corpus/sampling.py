"""
Anticipation samples: T contiguous windows of length tau_a placed before each
annotated target segment, labelled at their midpoints.
"""
import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .annotations import records_by_video
from .seeding import derive_seed

logger = logging.getLogger(__name__)


class GapStrategy(str, enum.Enum):
    UNKNOWN = 'unknown'
    RANDOM = 'random'
    PREVIOUS = 'previous'

    @property
    def needs_unknown(self):
        """UNKNOWN labels gaps with it, PREVIOUS falls back to it on a leading gap."""
        return self is not GapStrategy.RANDOM


def vocabulary_for(strategy, vocab):
    strategy = GapStrategy(strategy)
    return vocab.with_unknown() if strategy.needs_unknown else vocab.without_unknown()


@dataclass(frozen=True)
class SamplingConfig:
    tau_a: float = 1.0
    T: int = 8
    n: int = 4
    fps: float = 30.0
    gap_strategy: GapStrategy = GapStrategy.UNKNOWN
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'gap_strategy', GapStrategy(self.gap_strategy))
        if not self.tau_a > 0:
            raise ValueError(f"tau_a must be positive, got {self.tau_a}")
        if self.T < 1 or self.n < 1:
            raise ValueError("T and n must be at least 1")
        if not self.fps > 0:
            raise ValueError(f"fps must be positive, got {self.fps}")

    @property
    def tau_o(self):
        return self.T * self.tau_a

    def to_dict(self):
        return {'tau_a': self.tau_a, 'T': self.T, 'n': self.n, 'fps': self.fps,
                'gap_strategy': self.gap_strategy.value, 'seed': self.seed}


@dataclass(frozen=True)
class AnticipationSample:
    video_id: str
    clip_windows: tuple
    labels: tuple
    target_record: object
    frame_indices: np.ndarray = field(default=None, compare=False)

    @property
    def T(self):
        return len(self.clip_windows)

    @property
    def target(self):
        return self.labels[-1]


@dataclass
class SamplingResult:
    samples: list
    skipped: int = 0

    def __iter__(self):
        return iter(self.samples)

    def __len__(self):
        return len(self.samples)


def label_at(records, t, strategy, vocab, rng=None):
    """
    Action at time ``t`` for one video's sorted records. Inside overlapping
    segments the latest-starting one wins; gaps follow ``strategy``.
    """
    strategy = GapStrategy(strategy)
    covering = None
    previous = None
    for record in records:
        if record.start_s <= t < record.stop_s:
            covering = record
        elif record.stop_s <= t and (previous is None or record.stop_s >= previous.stop_s):
            previous = record
    if covering is not None:
        return covering.action_id
    if strategy is GapStrategy.RANDOM:
        if vocab.num_actions == 0:
            raise ValueError("Random gap labels need a non-empty vocabulary")
        rng = rng if rng is not None else np.random.default_rng()
        return int(rng.integers(vocab.num_actions))
    if strategy is GapStrategy.PREVIOUS and previous is not None:
        return previous.action_id
    if not vocab.has_unknown:
        raise ValueError(f"Gap strategy '{strategy.value}' needs a vocabulary with an unknown id")
    return vocab.unknown_id


def clip_windows(target_start, tau_a, T):
    """
    Window i (1-based) spans [start - tau_a*(T-i+1), start - tau_a*(T-i)), so
    the last window ends at the target start itself, not tau_a before it.
    ``build_samples`` still requires tau_o + tau_a of video before a target.
    """
    return tuple((target_start - tau_a * (T - i + 1), target_start - tau_a * (T - i)) for i in range(1, T + 1))


def frame_indices(windows, n, fps):
    """n evenly spaced frame numbers inside each window."""
    offsets = (np.arange(n) + 0.5) / n
    starts = np.array([w[0] for w in windows])[:, None]
    widths = np.array([w[1] - w[0] for w in windows])[:, None]
    return np.floor((starts + offsets * widths) * fps).astype(np.int64)


def build_samples(records, cfg, vocab):
    """
    One sample per annotated segment whose start leaves room for the full
    observation span and the anticipation gap; earlier targets are counted
    in ``skipped``.
    """
    vocab = vocabulary_for(cfg.gap_strategy, vocab)
    samples = []
    skipped = 0
    for video_id, video_records in sorted(records_by_video(records).items()):
        for position, target in enumerate(video_records):
            if target.start_s < cfg.tau_o + cfg.tau_a:
                skipped += 1
                continue
            rng = np.random.default_rng(derive_seed(cfg.seed, video_id, position))
            windows = clip_windows(target.start_s, cfg.tau_a, cfg.T)
            labels = tuple(
                label_at(video_records, 0.5 * (lo + hi), cfg.gap_strategy, vocab, rng) for lo, hi in windows
            ) + (target.action_id,)
            samples.append(AnticipationSample(
                video_id=video_id,
                clip_windows=windows,
                labels=labels,
                target_record=target,
                frame_indices=frame_indices(windows, cfg.n, cfg.fps),
            ))
    if skipped:
        logger.warning(f"Skipped {skipped} targets that start within tau_o + tau_a = "
                       f"{cfg.tau_o + cfg.tau_a:g}s of their video's beginning")
    return SamplingResult(samples=samples, skipped=skipped)


def windows_tile(windows, target_start, tau_o):
    """True when ``windows`` cover [target_start - tau_o, target_start) with no gap or overlap."""
    if not math.isclose(windows[0][0], target_start - tau_o, abs_tol=1e-9):
        return False
    if windows[-1][1] != target_start:
        return False
    return all(a[1] == b[0] for a, b in zip(windows, windows[1:]))
