"""Synthetic clips: a fixed binary template per action plus Gaussian pixel noise."""
import numpy as np

from encoder.clips import Clip

DEFAULT_SIGMA = 0.25


def class_template(action, height, width, channels=3, template_seed=0):
    rng = np.random.default_rng([template_seed, action])
    return (rng.random((height, width, channels)) < 0.5).astype(np.float64)


def render_templates(num_actions, height, width, channels=3, template_seed=0):
    return np.stack([class_template(a, height, width, channels, template_seed) for a in range(num_actions)])


def render_clip(action, n, height, width, seed, channels=3, sigma=DEFAULT_SIGMA, template_seed=0, unknown_id=None):
    """
    ``n`` frames of the action's template with i.i.d. N(0, sigma^2) noise,
    clipped to [0, 1]. The unknown action renders as uniform noise.
    """
    rng = np.random.default_rng(seed)
    if unknown_id is not None and action == unknown_id:
        return Clip(rng.random((n, height, width, channels)))
    template = class_template(action, height, width, channels, template_seed)
    frames = template[None] + sigma * rng.normal(size=(n, height, width, channels))
    return Clip(np.clip(frames, 0.0, 1.0))


def nearest_template_classify(frames, templates):
    """
    Recognition oracle: the action whose template is closest (squared error)
    to the frame average. ``frames`` is (n, H, W, C) or (B, n, H, W, C).
    """
    frames = np.asarray(frames)
    single = frames.ndim == 4
    if single:
        frames = frames[None]
    mean = frames.mean(axis=1).reshape(len(frames), -1)
    flat = templates.reshape(len(templates), -1)
    distances = (mean ** 2).sum(axis=1)[:, None] - 2.0 * mean @ flat.T + (flat ** 2).sum(axis=1)[None]
    predictions = distances.argmin(axis=1)
    return int(predictions[0]) if single else predictions


def template_correlations(templates):
    """Pairwise Pearson correlations of flattened templates (K x K)."""
    return np.corrcoef(templates.reshape(len(templates), -1))
