"""Statistical post-processing: rank correlation, multi-seed CIs, histograms."""

import numpy as np
from scipy import stats as _scipy_stats


class UndefinedCorrelationError(ValueError):
    """Raised when a rank correlation is undefined (constant input)."""


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank block."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.shape[0], dtype=float)
    sorted_x = x[order]
    i = 0
    while i < x.shape[0]:
        j = i
        while j + 1 < x.shape[0] and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Spearman rank-order correlation with average-rank tie handling."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"need two equal-length vectors, got {x.shape} and {y.shape}")
    if x.shape[0] < 2:
        raise ValueError("need at least 2 observations")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise UndefinedCorrelationError("correlation undefined for a constant vector")
    rx = _average_ranks(x) - 0.5 * (x.shape[0] + 1)
    ry = _average_ranks(y) - 0.5 * (y.shape[0] + 1)
    return float(np.dot(rx, ry) / np.sqrt(np.dot(rx, rx) * np.dot(ry, ry)))


def summarize_runs(values) -> tuple[float, float]:
    """Mean and 95% CI half-width (t distribution, K-1 dof) over K seeds."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.shape[0] < 2:
        raise ValueError("need at least 2 run values")
    k = values.shape[0]
    if np.all(values == values[0]):  # exact zero variance, no mean round-off
        return float(values[0]), 0.0
    mean = float(values.mean())
    sd = float(values.std(ddof=1))
    half_width = float(_scipy_stats.t.ppf(0.975, k - 1) * sd / np.sqrt(k))
    return mean, half_width


def difficulty_histogram(bs, n_bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Equal-width bins over [min, max]; returns (edges, percentage per bin).

    A degenerate range (all values equal) collapses to a single 100% bin.
    """
    bs = np.asarray(bs, dtype=float)
    if bs.ndim != 1 or bs.shape[0] == 0:
        raise ValueError("difficulties must be a non-empty vector")
    if n_bins < 1:
        raise ValueError(f"n_bins must be >= 1, got {n_bins}")
    lo, hi = float(bs.min()), float(bs.max())
    if lo == hi:
        return np.array([lo, hi]), np.array([100.0])
    counts, edges = np.histogram(bs, bins=n_bins, range=(lo, hi))
    return edges, counts * (100.0 / bs.shape[0])
