"""Artificial-crowd response generation.

An ensemble of learners is trained on subsampled, label-corrupted copies of
the training data so that member skill varies widely; every member then
labels all examples and the graded results form the response matrix used
for IRT fitting. Member predictions are kept so grading stays auditable.
"""

import warnings as _warnings
from dataclasses import dataclass, field

import numpy as np

from .irt import ResponseMatrix, grade_responses
from .learners import make_learner
from .seeding import derive_rng, derive_seed


def _default_fractions():
    return tuple(np.logspace(np.log10(0.01), 0.0, 10))


@dataclass
class CrowdConfig:
    """Knobs controlling the spread of member skill.

    Fractions are assigned round-robin across members; each member's flip
    probability is drawn uniformly from flip_prob_range unless flip_probs
    pins them explicitly (also round-robin).
    """

    ensemble_size: int = 100
    subsample_fractions: tuple = field(default_factory=_default_fractions)
    flip_prob_range: tuple = (0.0, 0.4)
    flip_probs: tuple | None = None
    seed: int = 0
    learner_spec: str = "logistic"
    train_epochs: int = 30
    lr: float = 0.1

    def __post_init__(self):
        if self.ensemble_size < 2:
            raise ValueError("ensemble_size must be >= 2")
        if not self.subsample_fractions or not all(0 < f <= 1 for f in self.subsample_fractions):
            raise ValueError("subsample fractions must lie in (0, 1]")
        lo, hi = self.flip_prob_range
        if not (0.0 <= lo <= hi <= 0.5):
            raise ValueError("flip_prob_range must be within [0, 0.5]")
        if self.flip_probs is not None and not all(0.0 <= p <= 0.5 for p in self.flip_probs):
            raise ValueError("flip probabilities must lie in [0, 0.5]")
        if self.train_epochs < 1 or self.lr <= 0:
            raise ValueError("train_epochs must be >= 1 and lr positive")


@dataclass(frozen=True)
class CrowdMember:
    member_id: str
    fraction: float
    flip_prob: float
    accuracy: float


@dataclass(frozen=True)
class CrowdResult:
    matrix: ResponseMatrix
    members: tuple
    predictions: np.ndarray
    warnings: tuple


def corrupt_labels(labels, flip_prob: float, rng, alphabet=None) -> np.ndarray:
    """Flip each label, with probability flip_prob, to a random other label.

    The alphabet defaults to the labels actually present; pass the task's
    full label set when corrupting a subsample that may miss classes.
    """
    labels = np.asarray(labels)
    if not 0.0 <= flip_prob <= 0.5:
        raise ValueError(f"flip_prob must be in [0, 0.5], got {flip_prob}")
    alphabet = np.unique(labels if alphabet is None else np.asarray(alphabet))
    if alphabet.shape[0] < 2:
        if flip_prob > 0:
            raise ValueError("cannot flip labels drawn from a single-symbol alphabet")
        return labels.copy()
    out = labels.copy()
    flip = rng.random(labels.shape[0]) < flip_prob
    n_flip = int(flip.sum())
    if n_flip:
        pos = np.searchsorted(alphabet, labels[flip])
        offset = rng.integers(1, alphabet.shape[0], n_flip)
        out[flip] = alphabet[(pos + offset) % alphabet.shape[0]]
    return out


def subsample_indices(n: int, fraction: float, rng) -> np.ndarray:
    """Sorted uniform sample without replacement of max(1, round(fraction*n))."""
    if n < 1:
        raise ValueError("cannot subsample an empty dataset")
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    size = max(1, int(np.floor(fraction * n + 0.5)))
    return np.sort(rng.choice(n, size=size, replace=False))


def subsample(dataset, fraction: float, rng):
    """Order-preserving uniform subsample of an indexable dataset."""
    data = np.asarray(dataset)
    return data[subsample_indices(data.shape[0], fraction, rng)]


def generate_crowd(train_X, train_y, all_X, gold, cfg: CrowdConfig, item_ids=None) -> CrowdResult:
    """Train the ensemble and grade every member on all examples.

    Member m trains for cfg.train_epochs epochs on a subsample of the
    training data with corrupted labels, then labels all_X; rows of the
    returned matrix are the graded (0/1) results against gold. Members
    whose training fails are skipped with a warning; at least 2 rows must
    survive.
    """
    train_X = np.asarray(train_X, dtype=float)
    train_y = np.asarray(train_y)
    all_X = np.asarray(all_X, dtype=float)
    gold = np.asarray(gold)
    if train_X.shape[0] != train_y.shape[0] or all_X.shape[0] != gold.shape[0]:
        raise ValueError("features and labels must align")
    if item_ids is None:
        item_ids = [f"item-{i}" for i in range(all_X.shape[0])]

    classes = np.unique(np.concatenate([train_y, gold]))
    class_pos = {c: k for k, c in enumerate(classes)}
    y_enc = np.array([class_pos[c] for c in train_y], dtype=np.int64)

    rows, members, warnings = [], [], []
    predictions = []
    for m in range(cfg.ensemble_size):
        fraction = float(cfg.subsample_fractions[m % len(cfg.subsample_fractions)])
        rng = derive_rng(cfg.seed, "crowd-member", m)
        if cfg.flip_probs is not None:
            flip_prob = float(cfg.flip_probs[m % len(cfg.flip_probs)])
        else:
            lo, hi = cfg.flip_prob_range
            flip_prob = float(rng.uniform(lo, hi))
        try:
            idx = subsample_indices(train_X.shape[0], fraction, rng)
            y_member = corrupt_labels(y_enc[idx], flip_prob, rng, alphabet=np.arange(classes.shape[0]))
            learner = make_learner(
                cfg.learner_spec,
                train_X.shape[1],
                classes.shape[0],
                seed=derive_seed(cfg.seed, "crowd-init", m),
            )
            for _ in range(cfg.train_epochs):
                learner.train_epoch(train_X[idx], y_member, cfg.lr)
            predicted = classes[learner.predict(all_X)]
        except Exception as exc:  # noqa: BLE001 - skip the member, keep the crowd
            msg = f"crowd member {m} failed and was skipped: {exc}"
            warnings.append(msg)
            _warnings.warn(msg)
            continue
        row = grade_responses(predicted, gold)
        rows.append(row)
        predictions.append(predicted)
        members.append(
            CrowdMember(f"member-{m:03d}", fraction, flip_prob, float(row.mean()))
        )

    if len(rows) < 2:
        raise ValueError(f"crowd generation kept {len(rows)} members; need at least 2")
    cells = np.stack(rows)
    matrix = ResponseMatrix.from_dense(cells, [mem.member_id for mem in members], item_ids)
    return CrowdResult(matrix, tuple(members), np.stack(predictions), tuple(warnings))
