"""Tests for Spearman correlation, run aggregation, and histograms."""

import numpy as np
import pytest
from scipy import stats as scipy_stats

from irt_curriculum.analysis import (
    UndefinedCorrelationError,
    difficulty_histogram,
    spearman,
    summarize_runs,
)


class TestSpearman:

    def test_worked_examples_exact(self):
        assert spearman([1, 2, 3], [10, 20, 30]) == 1.0
        assert spearman([1, 2, 3], [3, 2, 1]) == -1.0
        assert spearman([1, 2, 3, 4], [2, 1, 4, 3]) == 0.6

    def test_matches_scipy_on_random_data(self):
        rng = np.random.default_rng(30)
        for _ in range(50):
            n = rng.integers(3, 60)
            x = rng.standard_normal(n)
            y = rng.standard_normal(n)
            expected = scipy_stats.spearmanr(x, y).statistic
            assert spearman(x, y) == pytest.approx(expected, abs=1e-12)

    def test_matches_scipy_with_ties(self):
        """Average-rank handling agrees with scipy on heavily tied data."""
        rng = np.random.default_rng(31)
        for _ in range(50):
            n = rng.integers(4, 50)
            x = rng.integers(0, 5, n).astype(float)
            y = rng.integers(0, 5, n).astype(float)
            if np.all(x == x[0]) or np.all(y == y[0]):
                continue
            expected = scipy_stats.spearmanr(x, y).statistic
            assert spearman(x, y) == pytest.approx(expected, abs=1e-12)

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(32)
        x = rng.standard_normal(40)
        y = rng.standard_normal(40)
        base = spearman(x, y)
        assert spearman(np.exp(x), y) == pytest.approx(base, abs=1e-12)
        assert spearman(x, 3 * y + 7) == pytest.approx(base, abs=1e-12)

    def test_constant_vector_raises(self):
        with pytest.raises(UndefinedCorrelationError):
            spearman([1, 1, 1], [1, 2, 3])
        with pytest.raises(UndefinedCorrelationError):
            spearman([1, 2, 3], [5, 5, 5])

    def test_bounded(self):
        rng = np.random.default_rng(33)
        for _ in range(20):
            rho = spearman(rng.standard_normal(10), rng.standard_normal(10))
            assert -1.0 <= rho <= 1.0


class TestSummarizeRuns:

    def test_identical_values_have_zero_width(self):
        mean, hw = summarize_runs([0.7, 0.7, 0.7])
        assert mean == pytest.approx(0.7, abs=1e-12)
        assert hw == 0.0

    def test_two_point_worked_example(self):
        """t(0.975, df=1) = 12.7062 times the 0.5 standard error."""
        mean, hw = summarize_runs([0.0, 1.0])
        assert mean == 0.5
        assert hw == pytest.approx(6.3531, abs=1e-3)

    def test_translation_shifts_mean_only(self):
        rng = np.random.default_rng(34)
        values = rng.standard_normal(5)
        mean, hw = summarize_runs(values)
        mean2, hw2 = summarize_runs(values + 3.25)
        assert mean2 == pytest.approx(mean + 3.25, abs=1e-12)
        assert hw2 == pytest.approx(hw, abs=1e-12)

    def test_scaling_scales_width(self):
        rng = np.random.default_rng(35)
        values = rng.standard_normal(7)
        _, hw = summarize_runs(values)
        _, hw2 = summarize_runs(4.0 * values)
        assert hw2 == pytest.approx(4.0 * hw, abs=1e-9)

    def test_needs_two_values(self):
        with pytest.raises(ValueError):
            summarize_runs([1.0])


class TestDifficultyHistogram:

    def test_degenerate_range_single_bin(self):
        edges, percents = difficulty_histogram([2.0, 2.0, 2.0], 10)
        assert percents.tolist() == [100.0]
        assert edges.tolist() == [2.0, 2.0]

    def test_uniform_grid_ten_percent_per_bin(self):
        edges, percents = difficulty_histogram(np.arange(10, dtype=float), 10)
        assert np.allclose(percents, 10.0)
        assert len(edges) == 11

    def test_matches_counting_oracle(self):
        rng = np.random.default_rng(36)
        values = rng.standard_normal(1000)
        edges, percents = difficulty_histogram(values, 30)
        for k in range(30):
            lo, hi = edges[k], edges[k + 1]
            if k == 29:
                count = np.sum((values >= lo) & (values <= hi))
            else:
                count = np.sum((values >= lo) & (values < hi))
            assert percents[k] == pytest.approx(100.0 * count / 1000, abs=1e-9)

    def test_percentages_total_one_hundred(self):
        rng = np.random.default_rng(37)
        for _ in range(20):
            values = rng.standard_normal(rng.integers(1, 500))
            _, percents = difficulty_histogram(values, int(rng.integers(1, 40)))
            assert np.all(percents >= 0)
            assert percents.sum() == pytest.approx(100.0, abs=1e-9)

    def test_invalid(self):
        with pytest.raises(ValueError):
            difficulty_histogram([], 5)
        with pytest.raises(ValueError):
            difficulty_histogram([1.0], 0)
