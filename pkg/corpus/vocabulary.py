import math
from dataclasses import dataclass, field, replace


@dataclass(frozen=True)
class ActionVocabulary:
    """
    Dense action ids over (verb, noun) pairs. ``unknown_id``, when set, is the
    extra index K used to label unannotated gaps.
    """
    n_verbs: int
    n_nouns: int
    actions: tuple = ()
    unknown_id: int = None
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'actions', tuple(tuple(int(x) for x in pair) for pair in self.actions))
        for index, (verb, noun) in enumerate(self.actions):
            if not (0 <= verb < self.n_verbs and 0 <= noun < self.n_nouns):
                raise ValueError(f"Action {index} = ({verb}, {noun}) is outside {self.n_verbs} verbs x {self.n_nouns} nouns")
        if len(set(self.actions)) != len(self.actions):
            raise ValueError("Duplicate (verb, noun) pair in vocabulary")
        if self.unknown_id is not None and self.unknown_id != len(self.actions):
            raise ValueError(f"unknown_id must equal K={len(self.actions)}, got {self.unknown_id}")
        object.__setattr__(self, '_index', {pair: a for a, pair in enumerate(self.actions)})

    @property
    def num_actions(self):
        return len(self.actions)

    @property
    def size(self):
        """Width of a classification head over this vocabulary."""
        return self.num_actions + (1 if self.has_unknown else 0)

    @property
    def has_unknown(self):
        return self.unknown_id is not None

    def with_unknown(self):
        return replace(self, unknown_id=self.num_actions)

    def without_unknown(self):
        return replace(self, unknown_id=None)

    def action_id(self, verb, noun):
        try:
            return self._index[(int(verb), int(noun))]
        except KeyError:
            raise KeyError(f"No action for verb {verb}, noun {noun}") from None

    def verb_of(self, action):
        return self.actions[action][0]

    def noun_of(self, action):
        return self.actions[action][1]

    @classmethod
    def synthetic(cls, num_actions, n_verbs=5):
        """Action a is verb a % n_verbs with noun a // n_verbs."""
        n_verbs = min(n_verbs, num_actions) or 1
        actions = tuple((a % n_verbs, a // n_verbs) for a in range(num_actions))
        return cls(n_verbs=n_verbs, n_nouns=max(1, math.ceil(num_actions / n_verbs)), actions=actions)

    @classmethod
    def from_pairs(cls, pairs):
        pairs = sorted({(int(v), int(n)) for v, n in pairs})
        if not pairs:
            return cls(0, 0, ())
        return cls(
            n_verbs=max(v for v, _ in pairs) + 1,
            n_nouns=max(n for _, n in pairs) + 1,
            actions=tuple(pairs),
        )

    def to_dict(self):
        return {
            'n_verbs': self.n_verbs,
            'n_nouns': self.n_nouns,
            'actions': [list(pair) for pair in self.actions],
            'unknown_id': self.unknown_id,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data['n_verbs'], data['n_nouns'], tuple(map(tuple, data['actions'])), data.get('unknown_id'))
