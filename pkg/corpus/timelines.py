"""
Synthetic annotated videos: Markov label walks laid out on a timeline with
random durations and unannotated gaps, so gap-labelling strategies can be
exercised without real footage.
"""
import numpy as np

from .annotations import AnnotationRecord
from .markov import cumulative_rows, step_states
from .seeding import derive_seed


def gen_annotated_timelines(chain, vocab, num_videos, segments_per_video, seed,
                            mean_duration=1.0, gap_probability=0.3, lead_in=None):
    """
    Records for ``num_videos`` videos named ``video_0000``... Each video opens
    with ``lead_in`` seconds of unannotated time (default: 10 mean durations).
    """
    lead_in = 10.0 * mean_duration if lead_in is None else lead_in
    cumulative = cumulative_rows(chain.transitions)
    records = []
    for v in range(num_videos):
        rng = np.random.default_rng(derive_seed(seed, v))
        video_id = f"video_{v:04d}"
        state = np.array([rng.integers(chain.K)])
        t = lead_in
        for _ in range(segments_per_video):
            if rng.random() < gap_probability:
                t += rng.uniform(0.2, 1.0) * mean_duration
            duration = rng.uniform(0.5, 1.5) * mean_duration
            action = int(state[0])
            records.append(AnnotationRecord(
                video_id=video_id,
                start_s=float(t),
                stop_s=float(t + duration),
                verb_id=vocab.verb_of(action),
                noun_id=vocab.noun_of(action),
                action_id=action,
            ))
            t += duration
            state = step_states(cumulative, state, rng)
    return records
