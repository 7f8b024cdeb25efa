"""Command-line interface.

Subcommands mirror the pipeline stages so each is independently scriptable:
`fit`, `score`, `crowd generate`, `train`, `analyze`, and `run` for the
whole experiment. Exit codes: 0 success, 2 config error, 3 stage failure.
"""

import csv
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import vi
from .ability import estimate_ability
from .analysis import difficulty_histogram, spearman
from .crowd import CrowdConfig, generate_crowd
from .experiment import (
    ConfigError,
    StageError,
    _run_stages,
    format_summary_table,
    run_experiment,
    summarize_results_dir,
    validate_config,
    write_summary_csv,
)
from .irt import (
    ItemParams,
    read_difficulty_csv,
    read_matrix_csv,
    read_matrix_jsonl,
    write_difficulty_csv,
    write_matrix_csv,
    write_matrix_jsonl,
)
from .learners import read_dataset_csv
from .seeding import derive_seed

EXIT_CONFIG = 2
EXIT_STAGE = 3


@click.group()
def main():
    """Learned-difficulty curriculum training tools."""


def _read_matrix(path):
    path = Path(path)
    if path.suffix == ".jsonl":
        return read_matrix_jsonl(path)
    return read_matrix_csv(path)


@main.command()
@click.option("--responses", required=True, type=click.Path(exists=True), help="Response matrix CSV or JSONL.")
@click.option("--out-dir", required=True, type=click.Path(), help="Directory for difficulty/ability/report files.")
@click.option("--max-iterations", default=5000, show_default=True)
@click.option("--learning-rate", default=0.05, show_default=True)
@click.option("--mc-samples", default=4, show_default=True)
@click.option("--convergence-tol", default=1e-5, show_default=True)
@click.option("--seed", default=0, show_default=True)
def fit(responses, out_dir, max_iterations, learning_rate, mc_samples, convergence_tol, seed):
    """Fit the 1PL model to a response matrix."""
    try:
        matrix = _read_matrix(responses)
        posterior = vi.fit_1pl(
            matrix,
            vi.FitConfig(
                max_iterations=max_iterations,
                learning_rate=learning_rate,
                mc_samples=mc_samples,
                convergence_tol=convergence_tol,
                seed=seed,
            ),
        )
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_STAGE)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_difficulty_csv(ItemParams(posterior.item_ids, posterior.difficulty_mean), out / "difficulty.csv")
    vi.write_ability_csv(posterior.model_ids, posterior.ability_mean, out / "ability.csv")
    report = {
        "final_elbo": posterior.final_elbo,
        "iterations_run": posterior.iterations_run,
        "converged": posterior.converged,
        "warnings": list(posterior.warnings),
    }
    (out / "fit_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    click.echo(f"fit: {posterior.iterations_run} iterations, final ELBO {posterior.final_elbo:.4f}")


@main.command()
@click.option("--difficulties", required=True, type=click.Path(exists=True), help="CSV: item_id,difficulty.")
@click.option("--responses", required=True, type=click.Path(exists=True), help="CSV: item_id,correct.")
@click.option("--theta-min", default=-4.0, show_default=True)
@click.option("--theta-max", default=4.0, show_default=True)
def score(difficulties, responses, theta_min, theta_max):
    """Estimate one model's ability from graded responses."""
    try:
        params = read_difficulty_csv(difficulties)
        by_id = dict(zip(params.item_ids, params.difficulty))
        item_ids, graded = [], []
        with open(responses, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        if not rows or rows[0] != ["item_id", "correct"]:
            raise ValueError(f"{responses}: expected header item_id,correct")
        for row in rows[1:]:
            item_ids.append(row[0])
            graded.append(int(row[1]))
        missing = [i for i in item_ids if i not in by_id]
        if missing:
            raise ValueError(f"no difficulty for item {missing[0]!r}")
        bs = np.array([by_id[i] for i in item_ids])
        est = estimate_ability(np.array(graded), bs, bounds=(theta_min, theta_max))
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_STAGE)
    click.echo(json.dumps({"theta": est.theta, "clamped": est.clamped}))


@main.group()
def crowd():
    """Artificial-crowd commands."""


@crowd.command()
@click.option("--train-csv", required=True, type=click.Path(exists=True), help="Training split (features,label,planted_margin).")
@click.option("--eval-csv", multiple=True, type=click.Path(exists=True), help="Extra splits every member also labels.")
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--ensemble-size", default=100, show_default=True)
@click.option("--learner", default="logistic", show_default=True)
@click.option("--train-epochs", default=30, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--format", "matrix_format", type=click.Choice(["csv", "jsonl"]), default="csv", show_default=True)
def generate(train_csv, eval_csv, out_dir, ensemble_size, learner, train_epochs, seed, matrix_format):
    """Train an ensemble on corrupted subsamples and grade it everywhere."""
    try:
        splits = [("train", read_dataset_csv(train_csv))]
        for path in eval_csv:
            splits.append((Path(path).stem, read_dataset_csv(path)))
        all_X = np.vstack([ds.X for _, ds in splits])
        gold = np.concatenate([ds.y for _, ds in splits])
        item_ids = [f"{name}:{k}" for name, ds in splits for k in range(len(ds))]
        cfg = CrowdConfig(ensemble_size=ensemble_size, learner_spec=learner, train_epochs=train_epochs, seed=seed)
        result = generate_crowd(splits[0][1].X, splits[0][1].y, all_X, gold, cfg, item_ids)
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_STAGE)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if matrix_format == "jsonl":
        write_matrix_jsonl(result.matrix, out / "responses.jsonl")
    else:
        write_matrix_csv(result.matrix, out / "responses.csv")
    manifest = {
        "members": [
            {"member_id": m.member_id, "fraction": m.fraction, "flip_prob": m.flip_prob, "accuracy": m.accuracy}
            for m in result.members
        ],
        "warnings": list(result.warnings),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    click.echo(f"crowd: {result.matrix.n_models} members x {result.matrix.n_items} items")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--strategy", "strategy_kind", default=None, help="Run only this strategy kind.")
@click.option("--difficulty", "difficulty_source", default=None, help="Filter by difficulty source.")
@click.option("--seeds", "n_seeds", default=None, type=int, help="Override with seeds 0..N-1.")
def train(config_path, strategy_kind, difficulty_source, n_seeds):
    """Run training for (a subset of) the config's strategy/seed matrix."""

    def matches(entry):
        if strategy_kind is not None and entry["strategy"] != strategy_kind:
            return False
        if difficulty_source is not None and entry["difficulty_source"] != difficulty_source:
            return False
        return True

    try:
        cfg = validate_config(json.loads(Path(config_path).read_text()))
        out = _run_stages(
            cfg,
            strategy_filter=matches if (strategy_kind or difficulty_source) else None,
            seeds_override=list(range(n_seeds)) if n_seeds else None,
        )
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except (StageError, ValueError, OSError) as exc:
        click.echo(f"stage failure: {exc}", err=True)
        sys.exit(EXIT_STAGE)
    click.echo(f"training complete; results under {out / 'train'}")


@main.group()
def analyze():
    """Post-processing commands."""


@analyze.command()
@click.option("--difficulties", required=True, type=click.Path(exists=True))
@click.option("--heuristic", required=True, type=click.Path(exists=True))
def correlation(difficulties, heuristic):
    """Spearman correlation between two difficulty CSVs (joined on item_id)."""
    try:
        learned = read_difficulty_csv(difficulties)
        other = read_difficulty_csv(heuristic)
        other_by_id = dict(zip(other.item_ids, other.difficulty))
        common = [i for i in learned.item_ids if i in other_by_id]
        if len(common) < 2:
            raise ValueError("fewer than 2 shared item_ids between the files")
        learned_by_id = dict(zip(learned.item_ids, learned.difficulty))
        rho = spearman(
            np.array([learned_by_id[i] for i in common]),
            np.array([other_by_id[i] for i in common]),
        )
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_STAGE)
    click.echo(json.dumps({"rho": rho, "n": len(common)}))


@analyze.command()
@click.option("--difficulties", required=True, type=click.Path(exists=True))
@click.option("--bins", default=30, show_default=True)
@click.option("--out", default=None, type=click.Path(), help="Write CSV here instead of stdout.")
def dist(difficulties, bins, out):
    """Equal-width percentage histogram of difficulty values."""
    try:
        params = read_difficulty_csv(difficulties)
        edges, percents = difficulty_histogram(params.difficulty, bins)
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_STAGE)
    lines = ["bin_lo,bin_hi,percent"]
    for k in range(len(percents)):
        hi = edges[min(k + 1, len(edges) - 1)]
        lines.append(f"{float(edges[k])!r},{float(hi)!r},{float(percents[k])!r}")
    text = "\n".join(lines) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        click.echo(text, nl=False)


@analyze.command()
@click.option("--results", required=True, type=click.Path(exists=True), help="Directory containing result.json files.")
@click.option("--out", default=None, type=click.Path(), help="Also write the table as CSV.")
def runs(results, out):
    """Aggregate multi-seed results into a strategy x metric table."""
    try:
        rows = summarize_results_dir(results)
        if not rows:
            raise ValueError(f"no result.json files under {results}")
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_STAGE)
    if out:
        write_summary_csv(rows, out)
    click.echo(format_summary_table(rows))


@main.command()
@click.argument("config", type=click.Path())
@click.option("--force", is_flag=True, help="Re-run every stage even if outputs exist.")
def run(config, force):
    """Run the full pipeline from a JSON experiment config."""
    try:
        out = run_experiment(config, force=force)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except (StageError, ValueError, OSError) as exc:
        click.echo(f"stage failure: {exc}", err=True)
        sys.exit(EXIT_STAGE)
    click.echo(f"experiment complete: {out}")
    summary = out / "analysis" / "summary.csv"
    if summary.exists():
        click.echo(format_summary_table(summarize_results_dir(out / "train")))


if __name__ == "__main__":
    main()
