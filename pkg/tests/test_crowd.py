"""Tests for artificial-crowd generation: corruption, subsampling, grading."""

import numpy as np
import pytest

from irt_curriculum.crowd import (
    CrowdConfig,
    corrupt_labels,
    generate_crowd,
    subsample,
    subsample_indices,
)
from irt_curriculum.irt import grade_responses
from irt_curriculum.learners import SynthTaskConfig, make_synthetic_task
from irt_curriculum.vi import FitConfig, fit_1pl


@pytest.fixture(scope="module")
def benchmark_task():
    # noise 0.05 / decay 0.5 keeps the Bayes ceiling near 0.93 so strong
    # members can clear 0.9 while weak members stay near chance
    cfg = SynthTaskConfig(n_train=800, n_dev=100, n_test=200, margin_decay=0.5, noise_rate=0.05, seed=77)
    return make_synthetic_task(cfg)


class TestCorruptLabels:

    def test_zero_probability_is_identity(self):
        labels = np.array([0, 1, 1, 0, 1])
        out = corrupt_labels(labels, 0.0, np.random.default_rng(0))
        assert np.array_equal(out, labels)

    def test_flip_fraction_concentrates(self):
        """Binary labels at p=0.5 flip close to half the positions."""
        rng = np.random.default_rng(1)
        labels = rng.integers(0, 2, 10_000)
        out = corrupt_labels(labels, 0.5, np.random.default_rng(2))
        flipped = np.mean(out != labels)
        assert abs(flipped - 0.5) <= 0.02

    def test_deterministic_given_rng_state(self):
        labels = np.random.default_rng(3).integers(0, 3, 500)
        a = corrupt_labels(labels, 0.3, np.random.default_rng(9))
        b = corrupt_labels(labels, 0.3, np.random.default_rng(9))
        assert np.array_equal(a, b)

    def test_flips_go_to_different_labels(self):
        labels = np.zeros(1000, dtype=int)
        labels[::2] = 1
        labels[::5] = 2
        out = corrupt_labels(labels, 0.4, np.random.default_rng(4))
        changed = out != labels
        assert changed.any()
        assert np.all(out[changed] != labels[changed])

    def test_single_symbol_alphabet_rejected(self):
        with pytest.raises(ValueError):
            corrupt_labels(np.zeros(5, dtype=int), 0.1, np.random.default_rng(0))
        # flip_prob 0 with one symbol is fine
        out = corrupt_labels(np.zeros(5, dtype=int), 0.0, np.random.default_rng(0))
        assert np.array_equal(out, np.zeros(5))

    def test_invalid_probability(self):
        with pytest.raises(ValueError):
            corrupt_labels(np.array([0, 1]), 0.6, np.random.default_rng(0))


class TestSubsample:

    def test_full_fraction_preserves_order(self):
        data = np.arange(37)
        out = subsample(data, 1.0, np.random.default_rng(5))
        assert np.array_equal(out, data)

    def test_size_contract(self):
        idx = subsample_indices(100, 0.5, np.random.default_rng(6))
        assert idx.shape[0] == 50
        assert np.unique(idx).shape[0] == 50

    def test_deterministic(self):
        a = subsample_indices(200, 0.25, np.random.default_rng(7))
        b = subsample_indices(200, 0.25, np.random.default_rng(7))
        assert np.array_equal(a, b)

    def test_never_empty(self):
        assert subsample_indices(50, 0.001, np.random.default_rng(8)).shape[0] == 1

    def test_invalid(self):
        with pytest.raises(ValueError):
            subsample_indices(0, 0.5, np.random.default_rng(0))
        with pytest.raises(ValueError):
            subsample_indices(10, 0.0, np.random.default_rng(0))


class TestGenerateCrowd:

    def test_clean_full_member_beats_corrupted_tiny_member(self):
        """Separable blobs: full-data clean member strictly more accurate."""
        task = make_synthetic_task(
            SynthTaskConfig(n_train=400, n_dev=50, n_test=100, margin_decay=0.3, noise_rate=0.0, seed=10)
        )
        cfg = CrowdConfig(
            ensemble_size=2,
            subsample_fractions=(1.0, 0.02),
            flip_probs=(0.0, 0.4),
            seed=1,
            train_epochs=40,
        )
        all_X = np.vstack([task.train.X, task.test.X])
        gold = np.concatenate([task.train.y, task.test.y])
        result = generate_crowd(task.train.X, task.train.y, all_X, gold, cfg)
        assert result.members[0].accuracy > result.members[1].accuracy
        assert result.members[0].fraction == 1.0 and result.members[1].flip_prob == 0.4

    def test_degenerate_easy_crowd(self):
        """All clean full-data members: rows near all-ones and easy items."""
        task = make_synthetic_task(
            SynthTaskConfig(n_train=300, n_dev=30, n_test=60, margin_decay=0.25, noise_rate=0.0, seed=11)
        )
        cfg = CrowdConfig(
            ensemble_size=8,
            subsample_fractions=(1.0,),
            flip_probs=(0.0,),
            seed=2,
            train_epochs=40,
        )
        result = generate_crowd(task.train.X, task.train.y, task.train.X, task.train.y, cfg)
        dense = result.matrix.to_dense()
        assert dense.mean() >= 0.98
        posterior = fit_1pl(result.matrix, FitConfig(max_iterations=800, seed=0))
        assert posterior.difficulty_mean.mean() < posterior.ability_mean.mean()

    def test_bit_identical_given_seed(self, benchmark_task):
        task = benchmark_task
        cfg = CrowdConfig(ensemble_size=6, seed=33, train_epochs=10)
        runs = [
            generate_crowd(task.train.X, task.train.y, task.train.X, task.train.y, cfg)
            for _ in range(2)
        ]
        assert runs[0].matrix == runs[1].matrix
        assert np.array_equal(runs[0].predictions, runs[1].predictions)

    def test_accuracy_spread_on_benchmark(self, benchmark_task):
        """Default config produces both near-chance and strong members."""
        task = benchmark_task
        cfg = CrowdConfig(seed=5)
        all_X = np.vstack([task.train.X, task.dev.X, task.test.X])
        gold = np.concatenate([task.train.y, task.dev.y, task.test.y])
        result = generate_crowd(task.train.X, task.train.y, all_X, gold, cfg)
        accuracies = np.array([m.accuracy for m in result.members])
        assert accuracies.min() <= 0.55  # chance + 0.05 on a balanced binary task
        assert accuracies.max() >= 0.9

    def test_grading_consistency(self, benchmark_task):
        """Every cell is recomputable from the persisted member predictions."""
        task = benchmark_task
        cfg = CrowdConfig(ensemble_size=5, seed=6, train_epochs=10)
        result = generate_crowd(task.train.X, task.train.y, task.train.X, task.train.y, cfg)
        dense = result.matrix.to_dense()
        for m in range(len(result.members)):
            regraded = grade_responses(result.predictions[m], task.train.y)
            assert np.array_equal(dense[m], regraded)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            CrowdConfig(ensemble_size=1)
        with pytest.raises(ValueError):
            CrowdConfig(subsample_fractions=(0.0, 1.0))
        with pytest.raises(ValueError):
            CrowdConfig(flip_prob_range=(0.2, 0.7))
        with pytest.raises(ValueError):
            CrowdConfig(flip_probs=(0.9,))
