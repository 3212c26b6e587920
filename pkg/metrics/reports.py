import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import pandas as pd

logger = logging.getLogger(__name__)


@dataclass
class MetricReport:
    """
    Per-section scalar metrics (``action`` and, when the vocabulary has
    verb/noun structure, ``verb`` and ``noun``), per-class tables, and extra
    diagnostics such as recognition top-1.
    """
    sections: dict
    per_class: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def __getitem__(self, section):
        return self.sections[section]

    def to_dict(self):
        return {'sections': self.sections, 'extras': self.extras}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_jsonable)

    def to_text(self):
        columns = sorted({key for values in self.sections.values() for key in values if key != 'count'},
                         key=_metric_order)
        header = ['section'] + columns + ['count']
        rows = [[name] + [_fmt(values.get(c)) for c in columns] + [str(values.get('count', ''))]
                for name, values in self.sections.items()]
        widths = [max(len(str(cell)) for cell in column) for column in zip(header, *rows)]
        lines = ['  '.join(str(cell).ljust(w) for cell, w in zip(line, widths)).rstrip() for line in [header] + rows]
        for key, value in sorted(self.extras.items()):
            lines.append(f"{key}: {_fmt(value)}")
        return '\n'.join(lines) + '\n'

    def write(self, directory, prefix='report'):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = [directory / f"{prefix}.json", directory / f"{prefix}.txt"]
        paths[0].write_text(self.to_json())
        paths[1].write_text(self.to_text())
        for section, table in self.per_class.items():
            path = directory / f"{prefix}_per_class_{section}.csv"
            table.to_csv(path, index=False)
            paths.append(path)
        logger.info(f"Wrote metric report to {paths[0]}")
        return paths

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        return cls(sections=data['sections'], extras=data.get('extras', {}))


def per_class_table(recalls):
    """``recalls``: metric name -> ClassRecall, all over the same classes."""
    first = next(iter(recalls.values()))
    table = pd.DataFrame({'class_id': range(len(first.counts)), 'count': first.counts.astype(int)})
    for name, result in recalls.items():
        table[name] = result.recall
    return table[table['count'] > 0].reset_index(drop=True)


def _metric_order(name):
    prefix, _, k = name.partition('@')
    if name.startswith('top'):
        return (0, int(name[3:]), name)
    return (1 if prefix == 'cm_recall' else 2, int(k) if k.isdigit() else 0, name)


def _fmt(value):
    if value is None:
        return ''
    if isinstance(value, float):
        return 'nan' if math.isnan(value) else f"{value:.4f}"
    return str(value)


def _jsonable(value):
    if hasattr(value, 'item'):
        return value.item()
    if hasattr(value, 'tolist'):
        return value.tolist()
    raise TypeError(f"Cannot serialize {type(value).__name__}")
