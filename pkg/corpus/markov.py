"""
Synthetic Markov benchmark: sparse random transition matrices, label corpora
drawn from them, and the exact top-k recall of the optimal next-action
predictor.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ReducibleChainError

logger = logging.getLogger(__name__)

ROW_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class MarkovChainSpec:
    K: int
    transitions: np.ndarray
    successors_per_row: int
    seed: int = 0

    def __post_init__(self):
        P = np.asarray(self.transitions, dtype=np.float64)
        if P.shape != (self.K, self.K):
            raise ValueError(f"Transition matrix must be {self.K}x{self.K}, got {P.shape}")
        if np.any(P < 0):
            raise ValueError("Transition probabilities must be non-negative")
        if np.any(np.abs(P.sum(axis=1) - 1.0) > ROW_TOLERANCE):
            raise ValueError("Every transition row must sum to 1")
        if np.any((P > 0).sum(axis=1) > self.successors_per_row):
            raise ValueError(f"A row has more than {self.successors_per_row} successors")
        object.__setattr__(self, 'transitions', P)

    def to_dict(self):
        return {'K': self.K, 'successors_per_row': self.successors_per_row, 'seed': self.seed,
                'transitions': self.transitions.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(int(data['K']), np.array(data['transitions']), int(data['successors_per_row']),
                   int(data.get('seed', 0)))


def gen_markov_chain(K, s, seed):
    """Each row: s distinct successors, Dirichlet(1) weights."""
    if not 1 <= s <= K:
        raise ValueError(f"Need 1 <= s <= K, got s={s}, K={K}")
    rng = np.random.default_rng(seed)
    P = np.zeros((K, K))
    for a in range(K):
        successors = rng.choice(K, size=s, replace=False)
        P[a, successors] = rng.dirichlet(np.ones(s))
    P /= P.sum(axis=1, keepdims=True)
    return MarkovChainSpec(K=K, transitions=P, successors_per_row=s, seed=seed)


def step_states(cumulative, states, rng):
    u = rng.random(len(states))
    nxt = (cumulative[states] <= u[:, None]).sum(axis=1)
    return np.minimum(nxt, cumulative.shape[1] - 1)


def cumulative_rows(P):
    cum = np.cumsum(P, axis=1)
    return cum / cum[:, -1:]


def gen_label_sequences(chain, length, count, seed):
    """(count, length) int array; first state uniform, then transition rows."""
    if length < 2:
        raise ValueError(f"Sequence length must be at least 2, got {length}")
    rng = np.random.default_rng(seed)
    cumulative = cumulative_rows(chain.transitions)
    out = np.empty((count, length), dtype=np.int64)
    out[:, 0] = rng.integers(chain.K, size=count)
    for step in range(1, length):
        out[:, step] = step_states(cumulative, out[:, step - 1], rng)
    return out


def bigram_frequencies(sequences, K):
    """Row-normalized empirical transition counts and the visit count per row."""
    counts = np.zeros((K, K))
    np.add.at(counts, (sequences[:, :-1].ravel(), sequences[:, 1:].ravel()), 1.0)
    visits = counts.sum(axis=1)
    freq = np.divide(counts, visits[:, None], out=np.zeros_like(counts), where=visits[:, None] > 0)
    return freq, visits


def closed_classes(P):
    """Communicating classes that no transition leaves."""
    reach = (P > 0) | np.eye(len(P), dtype=bool)
    for k in range(len(P)):
        reach |= reach[:, k:k + 1] & reach[k:k + 1, :]
    classes = []
    seen = set()
    for i in range(len(P)):
        if i in seen:
            continue
        members = np.flatnonzero(reach[i] & reach[:, i])
        seen.update(members.tolist())
        if np.array_equal(np.flatnonzero(reach[i]), members):
            classes.append(members)
    return classes


def stationary_distribution(chain, tol=1e-12, max_iter=1_000_000):
    """Power iteration on the lazy chain (I + P) / 2 starting from uniform."""
    classes = closed_classes(chain.transitions)
    if len(classes) != 1:
        raise ReducibleChainError(
            f"Chain (seed {chain.seed}) has {len(classes)} closed classes and no unique stationary "
            f"distribution; try a different seed"
        )
    lazy = 0.5 * (np.eye(chain.K) + chain.transitions)
    pi = np.full(chain.K, 1.0 / chain.K)
    for _ in range(max_iter):
        nxt = pi @ lazy
        if np.abs(nxt - pi).sum() < tol:
            return nxt / nxt.sum()
        pi = nxt
    raise ReducibleChainError(f"Power iteration did not converge to {tol} in {max_iter} steps")


def topk_successors(P, k):
    """Indices of the k largest entries per row, lower index first on ties."""
    order = np.argsort(-P, axis=1, kind='stable')
    return order[:, :k]


@dataclass
class RecallResult:
    per_class: np.ndarray
    class_mean: float
    support: np.ndarray = field(default=None)


def bayes_topk_recall(chain, k):
    """
    Exact per-class and class-mean recall@k of the predictor that outputs the
    k most likely successors of the current state, weighted by the stationary
    distribution. Classes that never occur as a successor are NaN.
    """
    P = chain.transitions
    hits = np.zeros_like(P, dtype=bool)
    np.put_along_axis(hits, topk_successors(P, k), True, axis=1)
    try:
        pi = stationary_distribution(chain)
    except ReducibleChainError:
        if k < chain.successors_per_row:
            raise
        # every successor is covered, so only the support of each column matters
        support = (P > 0).any(axis=0)
        per_class = np.where(support, 1.0, np.nan)
        return RecallResult(per_class, float(np.nanmean(per_class)), support.astype(float))
    flow = pi[:, None] * P
    denominator = flow.sum(axis=0)
    numerator = (flow * hits).sum(axis=0)
    positive = denominator > 0
    per_class = np.full(chain.K, np.nan)
    per_class[positive] = numerator[positive] / denominator[positive]
    return RecallResult(per_class, float(per_class[positive].mean()), denominator)


def monte_carlo_topk_recall(chain, k, chains=200_000, steps=10, seed=0):
    """
    Simulated recall@k of the same predictor: ``chains`` walks started from
    the stationary distribution, ``steps`` transitions each.
    """
    rng = np.random.default_rng(seed)
    P = chain.transitions
    hits = np.zeros_like(P, dtype=bool)
    np.put_along_axis(hits, topk_successors(P, k), True, axis=1)
    pi = stationary_distribution(chain)
    state = rng.choice(chain.K, size=chains, p=pi)
    cumulative = cumulative_rows(P)
    correct = np.zeros(chain.K)
    seen = np.zeros(chain.K)
    for _ in range(steps):
        nxt = step_states(cumulative, state, rng)
        np.add.at(seen, nxt, 1.0)
        np.add.at(correct, nxt, hits[state, nxt].astype(float))
        state = nxt
    positive = seen > 0
    per_class = np.full(chain.K, np.nan)
    per_class[positive] = correct[positive] / seen[positive]
    logger.debug(f"Monte-Carlo recall@{k} over {chains * steps} transitions")
    return RecallResult(per_class, float(per_class[positive].mean()), seen)
