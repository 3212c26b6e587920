"""
On-disk layout of a generated corpus directory:

    corpus.json       generation parameters
    chain.json        MarkovChainSpec
    vocabulary.json   ActionVocabulary
    sequences.csv     sample_id, position, action_id
    clips.arrc        optional rendered clips (parameter container format)
    annotations.csv   optional synthetic timelines
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from numerics.checkpoint import load_container, save_container

from .annotations import parse_annotations, save_annotations
from .markov import MarkovChainSpec
from .vocabulary import ActionVocabulary

logger = logging.getLogger(__name__)

CORPUS_FILE = 'corpus.json'
CHAIN_FILE = 'chain.json'
VOCABULARY_FILE = 'vocabulary.json'
SEQUENCES_FILE = 'sequences.csv'
CLIPS_FILE = 'clips.arrc'
ANNOTATIONS_FILE = 'annotations.csv'


@dataclass
class SyntheticCorpus:
    chain: MarkovChainSpec
    vocabulary: ActionVocabulary
    sequences: np.ndarray
    params: dict = field(default_factory=dict)
    clips: np.ndarray = None
    records: list = None


def sequences_to_frame(sequences):
    count, length = sequences.shape
    return pd.DataFrame({
        'sample_id': np.repeat(np.arange(count), length),
        'position': np.tile(np.arange(length), count),
        'action_id': sequences.ravel(),
    })


def frame_to_sequences(frame):
    frame = frame.sort_values(['sample_id', 'position'], kind='stable')
    count = frame['sample_id'].nunique()
    if count == 0:
        return np.zeros((0, 0), dtype=np.int64)
    return frame['action_id'].to_numpy(dtype=np.int64).reshape(count, -1)


def save_corpus(directory, corpus):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / CORPUS_FILE).write_text(json.dumps(corpus.params, indent=2, sort_keys=True))
    (directory / CHAIN_FILE).write_text(json.dumps(corpus.chain.to_dict()))
    (directory / VOCABULARY_FILE).write_text(json.dumps(corpus.vocabulary.to_dict(), indent=2))
    sequences_to_frame(corpus.sequences).to_csv(directory / SEQUENCES_FILE, index=False)
    written = [CORPUS_FILE, CHAIN_FILE, VOCABULARY_FILE, SEQUENCES_FILE]
    if corpus.clips is not None:
        save_container(directory / CLIPS_FILE, {'clips': corpus.clips}, {'kind': 'synthetic_clips'})
        written.append(CLIPS_FILE)
    if corpus.records is not None:
        save_annotations(corpus.records, directory / ANNOTATIONS_FILE)
        written.append(ANNOTATIONS_FILE)
    logger.info(f"Saved corpus with {len(corpus.sequences)} sequences to {directory}")
    return [directory / name for name in written]


def load_corpus(directory):
    directory = Path(directory)
    if not (directory / CHAIN_FILE).exists():
        raise FileNotFoundError(f"{directory} does not contain a generated corpus ({CHAIN_FILE} missing)")
    params = json.loads((directory / CORPUS_FILE).read_text()) if (directory / CORPUS_FILE).exists() else {}
    chain = MarkovChainSpec.from_dict(json.loads((directory / CHAIN_FILE).read_text()))
    vocabulary = ActionVocabulary.from_dict(json.loads((directory / VOCABULARY_FILE).read_text()))
    sequences = frame_to_sequences(pd.read_csv(directory / SEQUENCES_FILE))
    clips = None
    if (directory / CLIPS_FILE).exists():
        clips = load_container(directory / CLIPS_FILE)[0]['clips']
    records = None
    if (directory / ANNOTATIONS_FILE).exists():
        records = parse_annotations(directory / ANNOTATIONS_FILE, vocabulary.without_unknown())[0]
    return SyntheticCorpus(chain, vocabulary, sequences, params, clips, records)
