"""End-to-end experiment pipeline.

One JSON config drives: synthetic-task generation, artificial-crowd
response collection, variational difficulty/ability fitting, one training
run per (strategy x seed), and the aggregate analysis tables. Every random
stream derives from the config's root seed plus a stage label, so a re-run
with the same config reproduces every numeric output byte for byte.

Stages read their inputs from the files written by earlier stages and are
skipped on resume when their dependency hash is unchanged.
"""

import csv
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import vi
from .analysis import difficulty_histogram, spearman, summarize_runs
from .crowd import CrowdConfig, generate_crowd
from .curriculum import CurriculumStrategy, DDACLAE, FULLY_SUPERVISED, STRATEGY_KINDS
from .irt import read_difficulty_csv, read_matrix_csv, write_difficulty_csv, write_matrix_csv, ItemParams
from .learners import (
    LEARNER_SPECS,
    SynthTaskConfig,
    make_learner,
    make_synthetic_task,
    read_dataset_csv,
    write_dataset_csv,
)
from .seeding import derive_rng, derive_seed
from .trainer import TrainConfig, run_strategy

SCHEMA_VERSION = 1
SPLITS = ("train", "dev", "test")


class ConfigError(Exception):
    """Invalid experiment config; carries the offending field path."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class StageError(Exception):
    """A pipeline stage failed after config validation."""


_TASK_DEFAULTS = {
    "kind": "synthetic",
    "n_train": 1000,
    "n_dev": 250,
    "n_test": 500,
    "n_features": 2,
    "n_classes": 2,
    "margin_decay": 1.0,
    "noise_rate": 0.0,
}
_CROWD_DEFAULTS = {
    "ensemble_size": 100,
    "subsample_fractions": None,
    "flip_prob_range": [0.0, 0.4],
    "learner": "logistic",
    "train_epochs": 30,
    "lr": 0.1,
}
_FIT_DEFAULTS = {
    "max_iterations": 5000,
    "learning_rate": 0.05,
    "mc_samples": 4,
    "convergence_tol": 1e-5,
}
_TRAIN_DEFAULTS = {
    "num_epochs": 30,
    "lr": 0.1,
    "early_stop_patience": 10,
    "dev_fraction": 0.1,
    "learner": "mlp",
    "hidden": 16,
    "batch_size": 32,
}
_STRATEGY_DEFAULTS = {
    "difficulty_source": "learned",
    "c0": 0.01,
    "T": None,
    "probe_size": 1000,
}


def _require(cfg, key, types, path):
    if key not in cfg:
        raise ConfigError(f"{path}.{key}", "missing required field")
    value = cfg[key]
    if not isinstance(value, types) or isinstance(value, bool):
        raise ConfigError(f"{path}.{key}", f"expected {types}, got {type(value).__name__}")
    return value


def _merge_section(cfg, name, defaults):
    section = cfg.get(name, {})
    if not isinstance(section, dict):
        raise ConfigError(name, "expected an object")
    unknown = set(section) - set(defaults)
    if unknown:
        raise ConfigError(f"{name}.{sorted(unknown)[0]}", "unknown field")
    merged = dict(defaults)
    merged.update(section)
    return merged


def validate_config(raw: dict) -> dict:
    """Fill defaults and type-check; returns the fully resolved config."""
    if not isinstance(raw, dict):
        raise ConfigError("$", "config must be a JSON object")
    schema = _require(raw, "schema", int, "$")
    if schema != SCHEMA_VERSION:
        raise ConfigError("$.schema", f"unsupported schema version {schema}")
    resolved = {
        "schema": schema,
        "seed": _require(raw, "seed", int, "$"),
        "output_dir": _require(raw, "output_dir", str, "$"),
        "task": _merge_section(raw, "task", _TASK_DEFAULTS),
        "crowd": _merge_section(raw, "crowd", _CROWD_DEFAULTS),
        "fit": _merge_section(raw, "fit", _FIT_DEFAULTS),
        "train": _merge_section(raw, "train", _TRAIN_DEFAULTS),
    }
    if resolved["task"]["kind"] != "synthetic":
        raise ConfigError("$.task.kind", "only 'synthetic' tasks are supported")
    for spec_key, section in (("crowd", "learner"), ("train", "learner")):
        if resolved[spec_key][section] not in LEARNER_SPECS:
            raise ConfigError(f"$.{spec_key}.{section}", f"expected one of {LEARNER_SPECS}")

    strategies = _require(raw, "strategies", list, "$")
    if not strategies:
        raise ConfigError("$.strategies", "need at least one strategy")
    resolved_strategies = []
    for k, entry in enumerate(strategies):
        path = f"$.strategies[{k}]"
        if not isinstance(entry, dict):
            raise ConfigError(path, "expected an object")
        kind = _require(entry, "strategy", str, path)
        if kind not in STRATEGY_KINDS:
            raise ConfigError(f"{path}.strategy", f"expected one of {STRATEGY_KINDS}")
        merged = dict(_STRATEGY_DEFAULTS)
        merged.update({key: val for key, val in entry.items() if key != "strategy"})
        unknown = set(merged) - set(_STRATEGY_DEFAULTS)
        if unknown:
            raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown field")
        if merged["difficulty_source"] == "length":
            raise ConfigError(
                f"{path}.difficulty_source",
                "the length heuristic needs text examples; synthetic tasks support "
                "'learned' or 'random'",
            )
        try:
            CurriculumStrategy(kind=kind, **merged)
        except ValueError as exc:
            raise ConfigError(path, str(exc)) from exc
        resolved_strategies.append({"strategy": kind, **merged})
    resolved["strategies"] = resolved_strategies

    seeds = _require(raw, "seeds", list, "$")
    if not seeds or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds):
        raise ConfigError("$.seeds", "expected a non-empty list of integers")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("$.seeds", "seed entries must be unique")
    resolved["seeds"] = seeds

    unknown = set(raw) - {"schema", "seed", "output_dir", "task", "crowd", "fit", "train", "strategies", "seeds"}
    if unknown:
        raise ConfigError(f"$.{sorted(unknown)[0]}", "unknown field")
    return resolved


def _canonical_hash(obj) -> str:
    if isinstance(obj, dict) and "output_dir" in obj:
        obj = {k: v for k, v in obj.items() if k != "output_dir"}  # hash the experiment, not its location
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


def _write_json(path, payload, config_hash):
    payload = dict(payload)
    payload["config_hash"] = config_hash
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _strategy_of(entry) -> CurriculumStrategy:
    return CurriculumStrategy(
        kind=entry["strategy"],
        c0=entry["c0"],
        T=entry["T"],
        probe_size=entry["probe_size"],
        difficulty_source=entry["difficulty_source"],
    )


def _strategy_label(entry) -> str:
    return _strategy_of(entry).label


class _State:
    """Per-stage completion tracking for idempotent resume."""

    def __init__(self, path):
        self.path = path
        self.stages = {}
        if path.exists():
            try:
                self.stages = json.loads(path.read_text()).get("stages", {})
            except json.JSONDecodeError:
                self.stages = {}

    def fresh(self, name, dep_hash, outputs):
        done = self.stages.get(name)
        if done != dep_hash:
            return False
        return all(p.exists() for p in outputs)

    def mark(self, name, dep_hash):
        self.stages[name] = dep_hash
        self.path.write_text(json.dumps({"stages": self.stages}, indent=2, sort_keys=True) + "\n")


def _run_training(payload):
    """One (strategy x seed) run; module-level so process pools can use it."""
    strategy = _strategy_of(payload["strategy"])
    train_cfg = TrainConfig(
        num_epochs=payload["train"]["num_epochs"],
        strategy=strategy,
        lr=payload["train"]["lr"],
        early_stop_patience=payload["train"]["early_stop_patience"],
        dev_fraction=payload["train"]["dev_fraction"],
        seed=payload["run_seed"],
    )
    learner_kwargs = {"batch_size": payload["train"]["batch_size"]}
    if payload["train"]["learner"] == "mlp":
        learner_kwargs["hidden"] = payload["train"]["hidden"]
    learner = make_learner(
        payload["train"]["learner"],
        payload["X"].shape[1],
        payload["n_classes"],
        seed=payload["init_seed"],
        **learner_kwargs,
    )
    result = run_strategy(
        learner,
        payload["X"],
        payload["y"],
        payload["difficulties"],
        train_cfg,
        payload["test_X"],
        payload["test_y"],
    )
    return result


def _trace_rows(result):
    rows = []
    for rec in result.records:
        rows.append(
            [
                rec.epoch,
                "" if rec.theta_hat is None else repr(float(rec.theta_hat)),
                rec.selected_count,
                repr(float(rec.train_acc)),
                repr(float(rec.dev_acc)),
                int(rec.fallback),
            ]
        )
    return rows


def _write_trace(path, result, config_hash):
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(["epoch", "theta_hat", "selected_count", "train_acc", "dev_acc", "fallback"])
        writer.writerows(_trace_rows(result))


def _max_workers():
    value = os.environ.get("IRT_CURRICULUM_THREADS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def run_experiment(config_path, force: bool = False) -> Path:
    """Execute (or resume) every stage of the experiment; returns output dir."""
    config_path = Path(config_path)
    try:
        raw = json.loads(config_path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError("$", f"config file not found: {config_path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"config is not valid JSON: {exc}") from exc
    cfg = validate_config(raw)
    return _run_stages(cfg, force=force)


def _run_stages(cfg, force=False, strategy_filter=None, seeds_override=None):
    root_seed = cfg["seed"]
    config_hash = _canonical_hash(cfg)
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    state = _State(out / "pipeline_state.json")
    _write_json(out / "config.resolved.json", cfg, config_hash)

    # --- task -------------------------------------------------------------
    task_dir = out / "task"
    task_hash = _canonical_hash({"seed": root_seed, "task": cfg["task"]})
    task_files = [task_dir / f"{name}.csv" for name in SPLITS]
    if force or not state.fresh("task", task_hash, task_files):
        task_dir.mkdir(exist_ok=True)
        tcfg = cfg["task"]
        task = make_synthetic_task(
            SynthTaskConfig(
                n_train=tcfg["n_train"],
                n_dev=tcfg["n_dev"],
                n_test=tcfg["n_test"],
                n_features=tcfg["n_features"],
                n_classes=tcfg["n_classes"],
                margin_decay=tcfg["margin_decay"],
                noise_rate=tcfg["noise_rate"],
                seed=derive_seed(root_seed, "task"),
            )
        )
        for name in SPLITS:
            write_dataset_csv(getattr(task, name), task_dir / f"{name}.csv", comment=f"config_hash={config_hash}")
        state.mark("task", task_hash)
    datasets = {name: read_dataset_csv(task_dir / f"{name}.csv") for name in SPLITS}

    # --- crowd ------------------------------------------------------------
    crowd_dir = out / "crowd"
    crowd_hash = _canonical_hash({"seed": root_seed, "task": cfg["task"], "crowd": cfg["crowd"]})
    crowd_files = [crowd_dir / "responses.csv", crowd_dir / "manifest.json", crowd_dir / "predictions.csv"]
    item_ids = [f"{name}:{k}" for name in SPLITS for k in range(len(datasets[name]))]
    if force or not state.fresh("crowd", crowd_hash, crowd_files):
        crowd_dir.mkdir(exist_ok=True)
        ccfg = cfg["crowd"]
        fractions = ccfg["subsample_fractions"]
        crowd_cfg = CrowdConfig(
            ensemble_size=ccfg["ensemble_size"],
            flip_prob_range=tuple(ccfg["flip_prob_range"]),
            seed=derive_seed(root_seed, "crowd"),
            learner_spec=ccfg["learner"],
            train_epochs=ccfg["train_epochs"],
            lr=ccfg["lr"],
            **({"subsample_fractions": tuple(fractions)} if fractions else {}),
        )
        all_X = np.vstack([datasets[name].X for name in SPLITS])
        gold = np.concatenate([datasets[name].y for name in SPLITS])
        result = generate_crowd(datasets["train"].X, datasets["train"].y, all_X, gold, crowd_cfg, item_ids)
        write_matrix_csv(result.matrix, crowd_dir / "responses.csv", comment=f"config_hash={config_hash}")
        manifest = {
            "members": [
                {
                    "member_id": mem.member_id,
                    "fraction": mem.fraction,
                    "flip_prob": mem.flip_prob,
                    "accuracy": mem.accuracy,
                }
                for mem in result.members
            ],
            "warnings": list(result.warnings),
        }
        _write_json(crowd_dir / "manifest.json", manifest, config_hash)
        with open(crowd_dir / "predictions.csv", "w", newline="") as fh:
            fh.write(f"# config_hash={config_hash}\n")
            writer = csv.writer(fh)
            writer.writerow(["member_id"] + item_ids)
            for mem, row in zip(result.members, result.predictions):
                writer.writerow([mem.member_id] + [str(v) for v in row])
        state.mark("crowd", crowd_hash)

    # --- fit ----------------------------------------------------------------
    fit_dir = out / "fit"
    fit_hash = _canonical_hash(
        {"seed": root_seed, "task": cfg["task"], "crowd": cfg["crowd"], "fit": cfg["fit"]}
    )
    fit_files = [fit_dir / "difficulty.csv", fit_dir / "ability.csv", fit_dir / "fit_report.json"]
    if force or not state.fresh("fit", fit_hash, fit_files):
        fit_dir.mkdir(exist_ok=True)
        matrix = read_matrix_csv(crowd_dir / "responses.csv")
        fcfg = cfg["fit"]
        posterior = vi.fit_1pl(
            matrix,
            vi.FitConfig(
                max_iterations=fcfg["max_iterations"],
                learning_rate=fcfg["learning_rate"],
                mc_samples=fcfg["mc_samples"],
                convergence_tol=fcfg["convergence_tol"],
                seed=derive_seed(root_seed, "fit"),
            ),
        )
        write_difficulty_csv(
            ItemParams(posterior.item_ids, posterior.difficulty_mean),
            fit_dir / "difficulty.csv",
            comment=f"config_hash={config_hash}",
        )
        vi.write_ability_csv(
            posterior.model_ids, posterior.ability_mean, fit_dir / "ability.csv",
            comment=f"config_hash={config_hash}",
        )
        report = {
            "final_elbo": posterior.final_elbo,
            "iterations_run": posterior.iterations_run,
            "converged": posterior.converged,
            "warnings": list(posterior.warnings),
            "n_models": len(posterior.model_ids),
            "n_items": len(posterior.item_ids),
        }
        _write_json(fit_dir / "fit_report.json", report, config_hash)
        state.mark("fit", fit_hash)

    # --- training runs ------------------------------------------------------
    params = read_difficulty_csv(fit_dir / "difficulty.csv")
    difficulty_by_id = dict(zip(params.item_ids, params.difficulty))
    n_train = len(datasets["train"])
    learned = np.array([difficulty_by_id[f"train:{k}"] for k in range(n_train)])
    random_difficulties = derive_rng(root_seed, "random-difficulty").standard_normal(n_train)

    strategies = cfg["strategies"]
    if strategy_filter is not None:
        strategies = [s for s in strategies if strategy_filter(s)]
        if not strategies:
            raise StageError("no config strategy matches the requested filter")
    seeds = cfg["seeds"] if seeds_override is None else list(seeds_override)

    train_dir = out / "train"
    pending, run_meta = [], []
    for entry in strategies:
        label = _strategy_label(entry)
        for seed_entry in seeds:
            run_dir = train_dir / label / f"seed-{seed_entry}"
            run_hash = _canonical_hash(
                {
                    "seed": root_seed,
                    "task": cfg["task"],
                    "crowd": cfg["crowd"],
                    "fit": cfg["fit"],
                    "train": cfg["train"],
                    "strategy": entry,
                    "run": seed_entry,
                }
            )
            stage_name = f"train/{label}/seed-{seed_entry}"
            outputs = [run_dir / "result.json", run_dir / "trace.csv"]
            if not force and state.fresh(stage_name, run_hash, outputs):
                continue
            if entry["difficulty_source"] == "random" and entry["strategy"] != FULLY_SUPERVISED:
                difficulties = random_difficulties
            else:
                difficulties = learned
            payload = {
                "strategy": entry,
                "train": cfg["train"],
                "run_seed": derive_seed(root_seed, "train", label, seed_entry),
                "init_seed": derive_seed(root_seed, "train", label, seed_entry, "init"),
                "X": datasets["train"].X,
                "y": datasets["train"].y,
                "difficulties": difficulties,
                "test_X": datasets["test"].X,
                "test_y": datasets["test"].y,
                "n_classes": cfg["task"]["n_classes"],
            }
            pending.append(payload)
            run_meta.append((stage_name, run_hash, run_dir, label, seed_entry))

    workers = min(_max_workers(), max(1, len(pending)))
    if workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_training, pending))
    else:
        results = [_run_training(p) for p in pending]

    for (stage_name, run_hash, run_dir, label, seed_entry), result in zip(run_meta, results):
        run_dir.mkdir(parents=True, exist_ok=True)
        payload = result.to_dict()
        payload["seed"] = seed_entry
        _write_json(run_dir / "result.json", payload, config_hash)
        _write_trace(run_dir / "trace.csv", result, config_hash)
        state.mark(stage_name, run_hash)

    # --- analysis -----------------------------------------------------------
    analysis_dir = out / "analysis"
    analysis_dir.mkdir(exist_ok=True)
    rows = summarize_results_dir(train_dir)
    write_summary_csv(rows, analysis_dir / "summary.csv", config_hash)

    edges, percents = difficulty_histogram(params.difficulty, 30)
    with open(analysis_dir / "difficulty_hist.csv", "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "percent"])
        for k in range(len(percents)):
            writer.writerow([repr(float(edges[k])), repr(float(edges[min(k + 1, len(edges) - 1)])), repr(float(percents[k]))])

    margin_rho = spearman(learned, datasets["train"].margin)
    _write_json(
        analysis_dir / "margin_correlation.json",
        {"spearman_difficulty_vs_margin": margin_rho, "n": n_train},
        config_hash,
    )
    return out


def summarize_results_dir(results_dir):
    """Aggregate result.json files into (strategy, metric mean/CI) rows."""
    results_dir = Path(results_dir)
    by_label = {}
    for path in sorted(results_dir.glob("**/result.json")):
        payload = json.loads(path.read_text())
        by_label.setdefault(payload["strategy_label"], []).append(payload)
    rows = []
    for label in sorted(by_label):
        runs = by_label[label]
        accs = [r["final_test_acc"] for r in runs]
        epochs = [r["convergence_epoch"] + 1 for r in runs]
        if len(runs) >= 2:
            acc_mean, acc_hw = summarize_runs(accs)
            ep_mean, ep_hw = summarize_runs(epochs)
        else:
            acc_mean, acc_hw = float(accs[0]), float("nan")
            ep_mean, ep_hw = float(epochs[0]), float("nan")
        rows.append(
            {
                "strategy": label,
                "n_seeds": len(runs),
                "test_acc_mean": acc_mean,
                "test_acc_ci95": acc_hw,
                "epochs_to_convergence_mean": ep_mean,
                "epochs_to_convergence_ci95": ep_hw,
            }
        )
    return rows


def write_summary_csv(rows, path, config_hash=None):
    with open(path, "w", newline="") as fh:
        if config_hash:
            fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(
            ["strategy", "n_seeds", "test_acc_mean", "test_acc_ci95",
             "epochs_to_convergence_mean", "epochs_to_convergence_ci95"]
        )
        for row in rows:
            writer.writerow(
                [
                    row["strategy"],
                    row["n_seeds"],
                    repr(row["test_acc_mean"]),
                    repr(row["test_acc_ci95"]),
                    repr(row["epochs_to_convergence_mean"]),
                    repr(row["epochs_to_convergence_ci95"]),
                ]
            )


def format_summary_table(rows) -> str:
    """Human-readable strategy x metric table, mean [±CI]."""
    lines = [f"{'strategy':<24} {'test acc':<20} {'epochs to convergence':<24}"]
    for row in rows:
        acc = f"{row['test_acc_mean']:.4f} [±{row['test_acc_ci95']:.4f}]"
        eps = f"{row['epochs_to_convergence_mean']:.2f} [±{row['epochs_to_convergence_ci95']:.2f}]"
        lines.append(f"{row['strategy']:<24} {acc:<20} {eps:<24}")
    return "\n".join(lines)
