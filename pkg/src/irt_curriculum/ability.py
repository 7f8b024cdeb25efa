"""Maximum-likelihood ability scoring against known item difficulties.

Given a graded binary response vector and the difficulties of the answered
items, find the theta maximizing the 1PL log-likelihood. The objective is
strictly concave in theta, so a safeguarded Newton iteration on its
derivative finds the unique maximizer; degenerate all-correct /
all-incorrect patterns clamp to the configured bounds.
"""

import numpy as np

from .irt import THETA_MAX, THETA_MIN, AbilityEstimate, sigmoid


def _check_inputs(z, bs):
    z = np.asarray(z, dtype=float)
    bs = np.asarray(bs, dtype=float)
    if z.ndim != 1 or z.shape[0] == 0:
        raise ValueError("response vector must be non-empty and 1-D")
    if z.shape != bs.shape:
        raise ValueError(f"length mismatch: {z.shape[0]} responses, {bs.shape[0]} difficulties")
    if not np.all(np.isfinite(bs)):
        raise ValueError("difficulties must be finite")
    if not np.all((z == 0) | (z == 1)):
        raise ValueError("responses must be 0 or 1")
    return z, bs


def ability_score_derivative(theta: float, z, bs) -> float:
    """d/dtheta of the response log-likelihood: sum_i (z_i - sigma(theta - b_i))."""
    z, bs = _check_inputs(z, bs)
    return float(np.sum(z - sigmoid(theta - bs)))


def ability_log_likelihood(theta: float, z, bs) -> float:
    """Response log-likelihood of one model at ability theta."""
    z, bs = _check_inputs(z, bs)
    eta = theta - bs
    return float(-np.logaddexp(0.0, (1.0 - 2.0 * z) * eta).sum())


def estimate_ability(z, bs, bounds=(THETA_MIN, THETA_MAX), tol=1e-6) -> AbilityEstimate:
    """MLE of ability over [bounds], safeguarded Newton to absolute tol.

    All-correct / all-incorrect patterns (and any interior pattern whose
    unconstrained maximizer falls outside the bounds) return the nearer
    bound with clamped=True, so training loops always get a finite theta.
    """
    z, bs = _check_inputs(z, bs)
    lo, hi = float(bounds[0]), float(bounds[1])
    if not lo < hi:
        raise ValueError(f"bounds must satisfy theta_min < theta_max, got {bounds}")

    # The score is strictly decreasing in theta; no sign change means the
    # maximizer sits at (or beyond) a bound.
    if ability_score_derivative(hi, z, bs) >= 0.0:
        return AbilityEstimate(hi, clamped=True)
    if ability_score_derivative(lo, z, bs) <= 0.0:
        return AbilityEstimate(lo, clamped=True)

    theta = 0.5 * (lo + hi)
    for _ in range(100):
        p = sigmoid(theta - bs)
        g = float(np.sum(z - p))
        if g > 0:
            lo = theta
        else:
            hi = theta
        h = float(-np.sum(p * (1.0 - p)))
        step = -g / h if h < 0 else 0.0
        candidate = theta + step
        if not lo < candidate < hi:
            candidate = 0.5 * (lo + hi)  # bisection fallback keeps the bracket
        if abs(candidate - theta) < tol:
            return AbilityEstimate(float(candidate), clamped=False)
        theta = candidate
    return AbilityEstimate(float(theta), clamped=False)
