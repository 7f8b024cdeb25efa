"""Data-selection policies for curriculum training.

Competence schedules (linear and root) give the fraction of easiest
examples available at step t; ability-threshold selection includes every
example whose difficulty is at most the current ability estimate. Also
holds the sentence-length difficulty heuristic for text examples.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

FULLY_SUPERVISED = "full"
CB_LINEAR = "cb-linear"
CB_ROOT = "cb-root"
DDACLAE = "ddaclae"
STRATEGY_KINDS = (FULLY_SUPERVISED, CB_LINEAR, CB_ROOT, DDACLAE)

# "random" is the uninformative stand-in heuristic for non-text tasks.
DIFFICULTY_SOURCES = ("learned", "length", "random")


@dataclass
class CurriculumStrategy:
    """Tagged selection policy plus its constants.

    T=None defers to num_epochs // 2 at training time.
    """

    kind: str
    c0: float = 0.01
    T: int | None = None
    probe_size: int = 1000
    difficulty_source: str = "learned"

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}, want one of {STRATEGY_KINDS}")
        if not 0.0 < self.c0 <= 1.0:
            raise ValueError(f"c0 must be in (0, 1], got {self.c0}")
        if self.T is not None and self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if self.probe_size < 1:
            raise ValueError(f"probe_size must be >= 1, got {self.probe_size}")
        if self.difficulty_source not in DIFFICULTY_SOURCES:
            raise ValueError(
                f"unknown difficulty_source {self.difficulty_source!r}, "
                f"want one of {DIFFICULTY_SOURCES}"
            )
        if self.kind == DDACLAE and self.difficulty_source != "learned":
            raise ValueError("ddaclae requires learned difficulties")

    @property
    def label(self) -> str:
        if self.kind in (CB_LINEAR, CB_ROOT):
            return f"{self.kind}_{self.difficulty_source}"
        return self.kind


def _check_schedule_args(t, T, c0):
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if not 0.0 < c0 <= 1.0:
        raise ValueError(f"c0 must be in (0, 1], got {c0}")


def cb_linear(t, T, c0: float = 0.01) -> float:
    """min(1, t * (1 - c0) / T + c0)"""
    _check_schedule_args(t, T, c0)
    if t >= T:  # mathematically exactly 1 from t = T on; avoid fp residue
        return 1.0
    return min(1.0, t * (1.0 - c0) / T + c0)


def cb_root(t, T, c0: float = 0.01) -> float:
    """min(1, sqrt(t * (1 - c0^2) / T + c0^2))"""
    _check_schedule_args(t, T, c0)
    if t >= T:
        return 1.0
    return min(1.0, math.sqrt(t * (1.0 - c0 * c0) / T + c0 * c0))


def select_by_proportion(difficulties, c: float) -> np.ndarray:
    """Indices of the k = max(1, round(c*N)) easiest examples, ascending.

    Difficulty ties break by ascending index so selection is deterministic.
    """
    difficulties = np.asarray(difficulties, dtype=float)
    if difficulties.ndim != 1 or difficulties.shape[0] == 0:
        raise ValueError("difficulties must be a non-empty vector")
    if not 0.0 < c <= 1.0:
        raise ValueError(f"proportion must be in (0, 1], got {c}")
    n = difficulties.shape[0]
    k = max(1, int(math.floor(c * n + 0.5)))
    order = np.argsort(difficulties, kind="stable")
    return np.sort(order[:k])


def select_by_ability(difficulties, theta_hat: float) -> np.ndarray:
    """Indices with difficulty <= theta_hat (ties included). May be empty."""
    difficulties = np.asarray(difficulties, dtype=float)
    if not np.all(np.isfinite(difficulties)):
        raise ValueError("difficulties must be finite")
    return np.flatnonzero(difficulties <= theta_hat)


def heuristic_difficulty_length(examples) -> np.ndarray:
    """Whitespace token count of each example's first text field.

    Sentence-pair examples count only the first sentence. Empty text gets
    difficulty 0 and a warning.
    """
    out = np.empty(len(examples), dtype=float)
    for k, ex in enumerate(examples):
        text = ex if isinstance(ex, str) else ex[0]
        tokens = text.split()
        if not tokens:
            warnings.warn(f"example {k} has empty text; using difficulty 0")
        out[k] = len(tokens)
    return out
