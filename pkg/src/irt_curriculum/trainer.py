"""Curriculum training loops.

All loops share one skeleton: hold out a dev fraction for early stopping,
pick a training subset each epoch according to the strategy, run one
training pass, and trace everything. The ability-driven loop additionally
probes the model each epoch (a pure forward pass on a fixed probe set),
grades the probe responses, and selects every example whose difficulty is
at most the estimated ability.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .ability import estimate_ability
from .curriculum import (
    CB_LINEAR,
    CB_ROOT,
    DDACLAE,
    FULLY_SUPERVISED,
    CurriculumStrategy,
    cb_linear,
    cb_root,
    select_by_ability,
    select_by_proportion,
)
from .irt import THETA_MAX, THETA_MIN, grade_responses
from .seeding import derive_rng


@dataclass
class TrainConfig:
    num_epochs: int
    strategy: CurriculumStrategy
    lr: float = 0.1
    early_stop_patience: int = 10
    dev_fraction: float = 0.10
    seed: int = 0

    def __post_init__(self):
        if self.num_epochs < 1:
            raise ValueError("num_epochs must be >= 1")
        if not 0.0 < self.dev_fraction < 0.5:
            raise ValueError(f"dev_fraction must be in (0, 0.5), got {self.dev_fraction}")
        if self.lr <= 0 or self.early_stop_patience < 1:
            raise ValueError("lr must be positive and early_stop_patience >= 1")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    theta_hat: float | None
    selected_count: int
    train_acc: float
    dev_acc: float
    fallback: bool
    selected_indices: np.ndarray

    def to_dict(self):
        return {
            "epoch": self.epoch,
            "theta_hat": self.theta_hat,
            "selected_count": self.selected_count,
            "train_acc": self.train_acc,
            "dev_acc": self.dev_acc,
            "fallback": self.fallback,
        }


@dataclass(frozen=True)
class TrainResult:
    strategy_label: str
    records: tuple
    convergence_epoch: int
    final_test_acc: float | None
    wall_time_s: float
    dev_indices: np.ndarray
    probe_indices: np.ndarray | None

    def to_dict(self):
        return {
            "strategy_label": self.strategy_label,
            "epochs": [r.to_dict() for r in self.records],
            "convergence_epoch": self.convergence_epoch,
            "final_test_acc": self.final_test_acc,
            "wall_time_s": self.wall_time_s,
        }


def sample_probe_set(train_X, n: int, rng) -> np.ndarray:
    """Fixed probe indices: min(n, |train|) drawn once, without replacement."""
    size = np.asarray(train_X).shape[0]
    if size < 1:
        raise ValueError("cannot sample a probe set from an empty training set")
    if n < 1:
        raise ValueError("probe size must be >= 1")
    return np.sort(rng.choice(size, size=min(n, size), replace=False))


def _accuracy(predicted, gold):
    return float(np.mean(np.asarray(predicted) == np.asarray(gold)))


def _split_dev(n, dev_fraction, rng):
    n_dev = max(1, int(np.floor(dev_fraction * n + 0.5)))
    if n - n_dev < 1:
        raise ValueError(f"training set of {n} is too small for dev_fraction={dev_fraction}")
    dev_idx = np.sort(rng.choice(n, size=n_dev, replace=False))
    fit_idx = np.setdiff1d(np.arange(n), dev_idx)
    return fit_idx, dev_idx


def _run_loop(learner, X, y, cfg, select_fn, test_X, test_y, probe_indices=None):
    start = time.perf_counter()
    fit_idx, dev_idx = _split_dev(X.shape[0], cfg.dev_fraction, derive_rng(cfg.seed, "dev-split"))
    X_fit, y_fit = X[fit_idx], y[fit_idx]
    X_dev, y_dev = X[dev_idx], y[dev_idx]

    records = []
    best_dev = -np.inf
    best_epoch = 0
    best_params = learner.get_params().copy()
    for epoch in range(cfg.num_epochs):
        selected, theta_hat, fallback = select_fn(epoch, learner, X_fit, y_fit)
        learner.train_epoch(X_fit[selected], y_fit[selected], cfg.lr)
        train_acc = _accuracy(learner.predict(X_fit), y_fit)
        dev_acc = _accuracy(learner.predict(X_dev), y_dev)
        records.append(
            EpochRecord(epoch, theta_hat, selected.shape[0], train_acc, dev_acc, fallback, selected)
        )
        if dev_acc > best_dev:
            best_dev = dev_acc
            best_epoch = epoch
            best_params = learner.get_params().copy()
        elif epoch - best_epoch >= cfg.early_stop_patience:
            break

    learner.set_params(best_params)
    final_test_acc = None
    if test_X is not None:
        final_test_acc = _accuracy(learner.predict(test_X), test_y)
    return TrainResult(
        strategy_label=cfg.strategy.label,
        records=tuple(records),
        convergence_epoch=best_epoch,
        final_test_acc=final_test_acc,
        wall_time_s=time.perf_counter() - start,
        dev_indices=dev_idx,
        probe_indices=probe_indices,
    )


def _check_difficulties(difficulties, n):
    difficulties = np.asarray(difficulties, dtype=float)
    if difficulties.shape != (n,):
        raise ValueError(f"need one difficulty per training example ({n}), got {difficulties.shape}")
    if not np.all(np.isfinite(difficulties)):
        raise ValueError("difficulties must be finite")
    return difficulties


def train_ddaclae(learner, X, y, difficulties, cfg: TrainConfig, test_X=None, test_y=None) -> TrainResult:
    """Ability-driven selection: probe, grade, estimate theta, take b <= theta.

    The probe pass is prediction only -- parameters are never updated by it.
    An empty selection falls back to the easiest 1% and flags the epoch.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    difficulties = _check_difficulties(difficulties, X.shape[0])
    if cfg.strategy.kind != DDACLAE:
        raise ValueError(f"strategy kind must be {DDACLAE!r}, got {cfg.strategy.kind!r}")

    # The probe set is drawn from the post-split training pool, once.
    fit_idx, _ = _split_dev(X.shape[0], cfg.dev_fraction, derive_rng(cfg.seed, "dev-split"))
    diff_fit = difficulties[fit_idx]
    probe = sample_probe_set(fit_idx, cfg.strategy.probe_size, derive_rng(cfg.seed, "probe"))

    def select(epoch, model, X_fit, y_fit):
        predicted = model.predict(X_fit[probe])
        graded = grade_responses(predicted, y_fit[probe])
        est = estimate_ability(graded, diff_fit[probe], bounds=(THETA_MIN, THETA_MAX))
        selected = select_by_ability(diff_fit, est.theta)
        if selected.shape[0] == 0:
            return select_by_proportion(diff_fit, 0.01), est.theta, True
        return selected, est.theta, False

    return _run_loop(learner, X, y, cfg, select, test_X, test_y, probe_indices=probe)


def train_cb(learner, X, y, difficulties, cfg: TrainConfig, test_X=None, test_y=None) -> TrainResult:
    """Competence-based selection on a fixed linear or root schedule."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    difficulties = _check_difficulties(difficulties, X.shape[0])
    if cfg.strategy.kind not in (CB_LINEAR, CB_ROOT):
        raise ValueError(f"strategy kind must be cb-linear or cb-root, got {cfg.strategy.kind!r}")
    schedule = cb_linear if cfg.strategy.kind == CB_LINEAR else cb_root
    T = cfg.strategy.T if cfg.strategy.T is not None else max(1, cfg.num_epochs // 2)

    fit_idx, _ = _split_dev(X.shape[0], cfg.dev_fraction, derive_rng(cfg.seed, "dev-split"))
    diff_fit = difficulties[fit_idx]

    def select(epoch, model, X_fit, y_fit):
        c = schedule(epoch, T, cfg.strategy.c0)
        return select_by_proportion(diff_fit, c), None, False

    return _run_loop(learner, X, y, cfg, select, test_X, test_y)


def train_full(learner, X, y, cfg: TrainConfig, test_X=None, test_y=None) -> TrainResult:
    """Fully supervised baseline: the whole pool every epoch."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if cfg.strategy.kind != FULLY_SUPERVISED:
        raise ValueError(f"strategy kind must be {FULLY_SUPERVISED!r}, got {cfg.strategy.kind!r}")

    def select(epoch, model, X_fit, y_fit):
        return np.arange(X_fit.shape[0]), None, False

    return _run_loop(learner, X, y, cfg, select, test_X, test_y)


def run_strategy(learner, X, y, difficulties, cfg: TrainConfig, test_X=None, test_y=None) -> TrainResult:
    """Dispatch on cfg.strategy.kind; difficulties may be None for `full`."""
    if cfg.strategy.kind == FULLY_SUPERVISED:
        return train_full(learner, X, y, cfg, test_X, test_y)
    if cfg.strategy.kind == DDACLAE:
        return train_ddaclae(learner, X, y, difficulties, cfg, test_X, test_y)
    return train_cb(learner, X, y, difficulties, cfg, test_X, test_y)
