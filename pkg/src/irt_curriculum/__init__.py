"""Learned difficulty and ability (1PL IRT) for curriculum training."""

from .ability import ability_score_derivative, estimate_ability
from .analysis import difficulty_histogram, spearman, summarize_runs
from .crowd import CrowdConfig, corrupt_labels, generate_crowd, subsample
from .curriculum import (
    CurriculumStrategy,
    cb_linear,
    cb_root,
    heuristic_difficulty_length,
    select_by_ability,
    select_by_proportion,
)
from .irt import (
    AbilityEstimate,
    ItemParams,
    ResponseMatrix,
    grade_responses,
    response_log_likelihood,
    response_probability,
)
from .learners import (
    Learner,
    LogisticLearner,
    MLPLearner,
    SynthTaskConfig,
    make_learner,
    make_synthetic_task,
)
from .trainer import TrainConfig, TrainResult, sample_probe_set, train_cb, train_ddaclae, train_full
from .vi import FitConfig, IrtPosterior, elbo, fit_1pl, posterior_point_estimates

__all__ = [
    "AbilityEstimate",
    "CrowdConfig",
    "CurriculumStrategy",
    "FitConfig",
    "IrtPosterior",
    "ItemParams",
    "Learner",
    "LogisticLearner",
    "MLPLearner",
    "ResponseMatrix",
    "SynthTaskConfig",
    "TrainConfig",
    "TrainResult",
    "ability_score_derivative",
    "cb_linear",
    "cb_root",
    "corrupt_labels",
    "difficulty_histogram",
    "elbo",
    "estimate_ability",
    "fit_1pl",
    "generate_crowd",
    "grade_responses",
    "heuristic_difficulty_length",
    "make_learner",
    "make_synthetic_task",
    "posterior_point_estimates",
    "response_log_likelihood",
    "response_probability",
    "sample_probe_set",
    "select_by_ability",
    "select_by_proportion",
    "spearman",
    "subsample",
    "summarize_runs",
    "train_cb",
    "train_ddaclae",
    "train_full",
]
