"""Desk-scale trainable classifiers and synthetic tasks.

Two built-in learners share one interface: plain multinomial logistic
regression and a one-hidden-layer tanh MLP, both trained by minibatch SGD
on cross-entropy with a constant learning rate. Synthetic tasks are
class-conditional Gaussians with a planted per-example margin (signed
distance to the Bayes boundary, toward the gold-label side) recorded as
ground-truth difficulty.
"""

import csv
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .seeding import derive_rng


class Learner(ABC):
    """Trainable classifier: one-epoch training, pure prediction, seeded reset."""

    @abstractmethod
    def reset(self, seed: int):
        """Restore a deterministic initial state."""

    @abstractmethod
    def train_epoch(self, X, y, lr: float) -> float:
        """One shuffled SGD pass over (X, y); returns mean loss."""

    @abstractmethod
    def predict(self, X) -> np.ndarray:
        """Argmax class labels; never mutates the learner."""

    @abstractmethod
    def get_params(self) -> np.ndarray:
        """Flat copy of all parameters."""

    @abstractmethod
    def set_params(self, flat):
        """Load parameters from a flat vector."""


def _softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _cross_entropy(logits, y):
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(log_norm - z[np.arange(y.shape[0]), y]))


class _GradientLearner(Learner):
    """Shared SGD loop and parameter plumbing for the built-in learners."""

    def __init__(self, n_features, n_classes=2, batch_size=32, seed=0):
        if n_features < 1 or n_classes < 2:
            raise ValueError("need n_features >= 1 and n_classes >= 2")
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.n_features = n_features
        self.n_classes = n_classes
        self.batch_size = batch_size
        self.reset(seed)

    def reset(self, seed: int):
        self._rng = np.random.default_rng(seed)
        self._init_weights(self._rng)

    def _check_features(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected (n, {self.n_features}) features, got {X.shape}")
        return X

    def _check_labels(self, X, y):
        y = np.asarray(y)
        if y.shape != (X.shape[0],):
            raise ValueError("labels must align with examples")
        y = y.astype(np.int64)
        if y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise ValueError(f"labels must lie in [0, {self.n_classes})")
        return y

    def train_epoch(self, X, y, lr: float) -> float:
        X = self._check_features(X)
        y = self._check_labels(X, y)
        n = X.shape[0]
        if n == 0:
            raise ValueError("cannot train on an empty subset")
        if lr < 0:
            raise ValueError("learning rate must be >= 0")
        order = self._rng.permutation(n)
        total = 0.0
        for start in range(0, n, self.batch_size):
            batch = order[start : start + self.batch_size]
            loss, grad = self._loss_and_grad(X[batch], y[batch])
            self.set_params(self.get_params() - lr * grad)
            total += loss * batch.shape[0]
        return total / n

    def predict(self, X) -> np.ndarray:
        X = self._check_features(X)
        return np.argmax(self._logits(X), axis=1)

    def loss(self, X, y) -> float:
        """Mean cross-entropy at the current parameters."""
        X = self._check_features(X)
        y = self._check_labels(X, y)
        return _cross_entropy(self._logits(X), y)

    def loss_grad(self, X, y) -> np.ndarray:
        """Flat gradient of loss(X, y) at the current parameters."""
        X = self._check_features(X)
        y = self._check_labels(X, y)
        return self._loss_and_grad(X, y)[1]

    def _init_weights(self, rng):
        raise NotImplementedError

    def _logits(self, X):
        raise NotImplementedError

    def _loss_and_grad(self, X, y):
        raise NotImplementedError


class LogisticLearner(_GradientLearner):
    """Multinomial logistic regression, zero-initialized."""

    def _init_weights(self, rng):
        self.W = np.zeros((self.n_features, self.n_classes))
        self.b = np.zeros(self.n_classes)

    def _logits(self, X):
        return X @ self.W + self.b

    def get_params(self):
        return np.concatenate([self.W.ravel(), self.b])

    def set_params(self, flat):
        flat = np.asarray(flat, dtype=float)
        k = self.n_features * self.n_classes
        self.W = flat[:k].reshape(self.n_features, self.n_classes).copy()
        self.b = flat[k:].copy()

    def _loss_and_grad(self, X, y):
        n = X.shape[0]
        logits = self._logits(X)
        probs = _softmax(logits)
        loss = _cross_entropy(logits, y)
        dlogits = probs
        dlogits[np.arange(n), y] -= 1.0
        dlogits /= n
        dW = X.T @ dlogits
        db = dlogits.sum(axis=0)
        return loss, np.concatenate([dW.ravel(), db])


class MLPLearner(_GradientLearner):
    """One hidden tanh layer; small random init breaks symmetry."""

    def __init__(self, n_features, n_classes=2, hidden=16, batch_size=32, seed=0):
        if hidden < 1:
            raise ValueError("hidden width must be >= 1")
        self.hidden = hidden
        super().__init__(n_features, n_classes, batch_size, seed)

    def _init_weights(self, rng):
        self.W1 = rng.normal(0.0, 1.0 / np.sqrt(self.n_features), (self.n_features, self.hidden))
        self.b1 = np.zeros(self.hidden)
        self.W2 = rng.normal(0.0, 1.0 / np.sqrt(self.hidden), (self.hidden, self.n_classes))
        self.b2 = np.zeros(self.n_classes)

    def _logits(self, X):
        return np.tanh(X @ self.W1 + self.b1) @ self.W2 + self.b2

    def get_params(self):
        return np.concatenate([self.W1.ravel(), self.b1, self.W2.ravel(), self.b2])

    def set_params(self, flat):
        flat = np.asarray(flat, dtype=float)
        sizes = [self.n_features * self.hidden, self.hidden, self.hidden * self.n_classes, self.n_classes]
        parts = np.split(flat, np.cumsum(sizes)[:-1])
        self.W1 = parts[0].reshape(self.n_features, self.hidden).copy()
        self.b1 = parts[1].copy()
        self.W2 = parts[2].reshape(self.hidden, self.n_classes).copy()
        self.b2 = parts[3].copy()

    def _loss_and_grad(self, X, y):
        n = X.shape[0]
        h = np.tanh(X @ self.W1 + self.b1)
        logits = h @ self.W2 + self.b2
        probs = _softmax(logits)
        loss = _cross_entropy(logits, y)
        dlogits = probs
        dlogits[np.arange(n), y] -= 1.0
        dlogits /= n
        dW2 = h.T @ dlogits
        db2 = dlogits.sum(axis=0)
        dh = dlogits @ self.W2.T
        dpre = dh * (1.0 - h * h)
        dW1 = X.T @ dpre
        db1 = dpre.sum(axis=0)
        return loss, np.concatenate([dW1.ravel(), db1, dW2.ravel(), db2])


LEARNER_SPECS = ("logistic", "mlp")


def make_learner(spec: str, n_features: int, n_classes: int, seed: int = 0, **kwargs) -> Learner:
    """Instantiate a built-in learner by name."""
    if spec == "logistic":
        return LogisticLearner(n_features, n_classes, seed=seed, **kwargs)
    if spec == "mlp":
        return MLPLearner(n_features, n_classes, seed=seed, **kwargs)
    raise ValueError(f"unknown learner spec {spec!r}, want one of {LEARNER_SPECS}")


# ---------------------------------------------------------------------------
# Synthetic tasks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthTaskConfig:
    n_train: int
    n_dev: int
    n_test: int
    n_features: int = 2
    n_classes: int = 2
    margin_decay: float = 1.0
    noise_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if min(self.n_train, self.n_dev, self.n_test) < 1:
            raise ValueError("all split sizes must be >= 1")
        if self.n_classes < 2:
            raise ValueError("need at least 2 classes")
        if self.n_features < 1 or (self.n_classes > 2 and self.n_features < 2):
            raise ValueError("need n_features >= 2 for more than 2 classes")
        if self.margin_decay <= 0:
            raise ValueError("margin_decay must be positive")
        if not 0.0 <= self.noise_rate <= 0.3:
            raise ValueError(f"noise_rate must be in [0, 0.3], got {self.noise_rate}")


@dataclass(frozen=True)
class Dataset:
    """Feature matrix, gold labels, and planted margins for one split."""

    X: np.ndarray
    y: np.ndarray
    margin: np.ndarray

    def __len__(self):
        return self.X.shape[0]


@dataclass(frozen=True)
class SynthTask:
    train: Dataset
    dev: Dataset
    test: Dataset
    class_means: np.ndarray


def _class_means(n_classes, n_features):
    means = np.zeros((n_classes, n_features))
    if n_features == 1:
        means[:, 0] = np.array([1.0, -1.0])
    else:
        angles = 2.0 * np.pi * np.arange(n_classes) / n_classes
        means[:, 0] = np.cos(angles)
        means[:, 1] = np.sin(angles)
    return means


def _planted_margin(X, y, means):
    # Signed distance to the Bayes boundary toward the gold-label side:
    # min over competing classes c of the signed distance to the (gold, c)
    # bisector hyperplane. Negative when the point sits on the wrong side.
    n, n_classes = X.shape[0], means.shape[0]
    d2 = ((X[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    d2_gold = d2[np.arange(n), y]
    margin = np.full(n, np.inf)
    for c in range(n_classes):
        rows = np.flatnonzero(y != c)
        gap = np.linalg.norm(means[y[rows]] - means[c], axis=1)
        signed = (d2[rows, c] - d2_gold[rows]) / (2.0 * gap)
        margin[rows] = np.minimum(margin[rows], signed)
    return margin


def _sample_split(n, means, cfg, rng):
    n_classes, n_features = means.shape
    classes = rng.integers(0, n_classes, n)
    X = means[classes] + cfg.margin_decay * rng.standard_normal((n, n_features))
    y = classes.copy()
    n_flip = int(np.floor(cfg.noise_rate * n + 0.5))
    if n_flip > 0:
        flip_idx = rng.choice(n, size=n_flip, replace=False)
        y[flip_idx] = (y[flip_idx] + 1 + rng.integers(0, n_classes - 1, n_flip)) % n_classes
    return Dataset(X, y, _planted_margin(X, y, means))


def make_synthetic_task(cfg: SynthTaskConfig) -> SynthTask:
    """Class-conditional Gaussian blobs with recorded planted margins."""
    means = _class_means(cfg.n_classes, cfg.n_features)
    splits = {}
    for name, n in (("train", cfg.n_train), ("dev", cfg.n_dev), ("test", cfg.n_test)):
        splits[name] = _sample_split(n, means, cfg, derive_rng(cfg.seed, "synth-task", name))
    return SynthTask(splits["train"], splits["dev"], splits["test"], means)


def nearest_mean_labels(X, class_means) -> np.ndarray:
    """Bayes-optimal labels for the synthetic geometry (nearest class mean)."""
    dists = np.linalg.norm(np.asarray(X)[:, None, :] - class_means[None, :, :], axis=2)
    return np.argmin(dists, axis=1)


def write_dataset_csv(ds: Dataset, path, comment=None):
    """CSV with feature columns, then `label`, then `planted_margin`."""
    n_features = ds.X.shape[1]
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow([f"f{k}" for k in range(n_features)] + ["label", "planted_margin"])
        for row, label, margin in zip(ds.X, ds.y, ds.margin):
            writer.writerow([repr(float(v)) for v in row] + [int(label), repr(float(margin))])


def read_dataset_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    header = rows[0]
    if header[-2:] != ["label", "planted_margin"]:
        raise ValueError(f"{path}: expected trailing columns label,planted_margin")
    n_features = len(header) - 2
    X = np.array([[float(v) for v in r[:n_features]] for r in rows[1:]])
    y = np.array([int(r[n_features]) for r in rows[1:]], dtype=np.int64)
    margin = np.array([float(r[n_features + 1]) for r in rows[1:]])
    return Dataset(X, y, margin)
