"""
Ingestion of action-segment annotation CSVs.

Required columns: video_id, start_s, stop_s, verb_id, noun_id. An action_id
column is optional; without it action ids are assigned densely to the observed
(verb, noun) pairs in sorted order.
"""
import logging
from collections import defaultdict
from dataclasses import dataclass

import pandas as pd

from .exceptions import AnnotationError
from .vocabulary import ActionVocabulary

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ('video_id', 'start_s', 'stop_s', 'verb_id', 'noun_id')


@dataclass(frozen=True)
class AnnotationRecord:
    video_id: str
    start_s: float
    stop_s: float
    verb_id: int
    noun_id: int
    action_id: int

    @property
    def duration(self):
        return self.stop_s - self.start_s


def _parse_row(row, line, has_action):
    try:
        start, stop = float(row['start_s']), float(row['stop_s'])
        verb, noun = int(row['verb_id']), int(row['noun_id'])
        action = int(row['action_id']) if has_action else None
    except (TypeError, ValueError) as exc:
        raise AnnotationError(f"malformed value ({exc})", line) from exc
    video = str(row['video_id']).strip()
    if not video:
        raise AnnotationError("empty video_id", line)
    if not start < stop:
        raise AnnotationError(f"start_s {start} is not before stop_s {stop}", line)
    if verb < 0 or noun < 0 or (action is not None and action < 0):
        raise AnnotationError("class ids must be non-negative", line)
    return video, start, stop, verb, noun, action


def parse_annotations(csv_path, vocabulary=None):
    """
    Return ``(records, vocabulary)``; records are sorted by (video_id, start_s).
    With a known ``vocabulary`` every row is checked against it instead.
    """
    try:
        frame = pd.read_csv(csv_path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError as exc:
        raise AnnotationError("file has no header") from exc
    except pd.errors.ParserError as exc:
        raise AnnotationError(f"unreadable CSV ({exc})") from exc
    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise AnnotationError(f"missing columns {missing}", 1)
    has_action = 'action_id' in frame.columns

    rows = []
    for position, row in enumerate(frame.to_dict('records')):
        rows.append((position + 2,) + _parse_row(row, position + 2, has_action))

    if vocabulary is not None:
        vocab = vocabulary
        rows = [r[:6] + (_check_known(vocab, r),) for r in rows]
    elif has_action:
        vocab = _vocabulary_from_ids(rows)
    else:
        vocab = ActionVocabulary.from_pairs((verb, noun) for _, _, _, _, verb, noun, _ in rows)
        lookup = {pair: index for index, pair in enumerate(vocab.actions)}
        rows = [r[:6] + (lookup[(r[4], r[5])],) for r in rows]

    records = [AnnotationRecord(video, start, stop, verb, noun, action)
               for _, video, start, stop, verb, noun, action in rows]
    records.sort(key=lambda r: (r.video_id, r.start_s))
    logger.info(f"Parsed {len(records)} annotations over {len({r.video_id for r in records})} videos "
                f"({vocab.num_actions} actions) from {csv_path}")
    return records, vocab


def _check_known(vocab, row):
    line, _, _, _, verb, noun, action = row
    try:
        expected = vocab.action_id(verb, noun)
    except KeyError:
        raise AnnotationError(f"(verb, noun) {(verb, noun)} is not in the vocabulary", line) from None
    if action is not None and action != expected:
        raise AnnotationError(f"action_id {action} does not match vocabulary id {expected}", line)
    return expected


def _vocabulary_from_ids(rows):
    pairs = {}
    owner = {}
    for line, _, _, _, verb, noun, action in rows:
        if pairs.setdefault(action, (verb, noun)) != (verb, noun):
            raise AnnotationError(f"action_id {action} maps to both {pairs[action]} and {(verb, noun)}", line)
        if owner.setdefault((verb, noun), action) != action:
            raise AnnotationError(f"(verb, noun) {(verb, noun)} has action ids {owner[(verb, noun)]} and {action}", line)
    if not pairs:
        return ActionVocabulary(0, 0, ())
    absent = sorted(set(range(max(pairs) + 1)) - set(pairs))
    if absent:
        raise AnnotationError(f"action ids are not dense; missing {absent[:10]}")
    return ActionVocabulary(
        n_verbs=max(v for v, _ in pairs.values()) + 1,
        n_nouns=max(n for _, n in pairs.values()) + 1,
        actions=tuple(pairs[a] for a in range(len(pairs))),
    )


def save_annotations(records, csv_path):
    frame = pd.DataFrame(
        [(r.video_id, r.start_s, r.stop_s, r.verb_id, r.noun_id, r.action_id) for r in records],
        columns=REQUIRED_COLUMNS + ('action_id',),
    )
    frame.to_csv(csv_path, index=False, float_format='%.17g')
    return csv_path


def records_by_video(records):
    grouped = defaultdict(list)
    for record in records:
        grouped[record.video_id].append(record)
    return {video: sorted(rs, key=lambda r: r.start_s) for video, rs in grouped.items()}
