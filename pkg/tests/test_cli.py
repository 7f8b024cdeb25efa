"""Tests for the CLI subcommands and the experiment pipeline."""

import json
import os
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from irt_curriculum.cli import main
from irt_curriculum.experiment import ConfigError, run_experiment, validate_config
from irt_curriculum.irt import (
    ItemParams,
    ResponseMatrix,
    read_difficulty_csv,
    write_difficulty_csv,
    write_matrix_csv,
)
from irt_curriculum.vi import read_ability_csv


def tiny_config(out_dir, seeds=(0, 1)):
    return {
        "schema": 1,
        "seed": 2024,
        "output_dir": str(out_dir),
        "task": {
            "n_train": 150,
            "n_dev": 30,
            "n_test": 60,
            "margin_decay": 0.8,
            "noise_rate": 0.1,
        },
        "crowd": {"ensemble_size": 6, "train_epochs": 8},
        "fit": {"max_iterations": 300},
        "train": {"num_epochs": 6, "learner": "mlp", "hidden": 8},
        "strategies": [
            {"strategy": "full"},
            {"strategy": "cb-root", "difficulty_source": "learned"},
        ],
        "seeds": list(seeds),
    }


def write_config(tmp_path, cfg):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(cfg, indent=2))
    return path


def snapshot_bytes(root):
    out = {}
    for path in sorted(Path(root).rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = path.read_bytes()
    return out


def strip_wall_time(data: bytes) -> bytes:
    lines = [l for l in data.split(b"\n") if b"wall_time_s" not in l]
    return b"\n".join(lines)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One executed tiny experiment shared across assertions."""
    tmp = tmp_path_factory.mktemp("exp")
    cfg = tiny_config(tmp / "out")
    path = write_config(tmp, cfg)
    out = run_experiment(path)
    return path, out


class TestConfigValidation:

    def test_missing_field_reports_path(self):
        with pytest.raises(ConfigError) as err:
            validate_config({"schema": 1, "seed": 0})
        assert "output_dir" in str(err.value)

    def test_unknown_field_rejected(self):
        cfg = tiny_config("x")
        cfg["task"]["n_classes_typo"] = 3
        with pytest.raises(ConfigError) as err:
            validate_config(cfg)
        assert "n_classes_typo" in str(err.value)

    def test_bad_strategy_reported_with_index(self):
        cfg = tiny_config("x")
        cfg["strategies"].append({"strategy": "hard-first"})
        with pytest.raises(ConfigError) as err:
            validate_config(cfg)
        assert "strategies[2]" in str(err.value)

    def test_length_heuristic_rejected_for_synthetic_task(self):
        cfg = tiny_config("x")
        cfg["strategies"] = [{"strategy": "cb-linear", "difficulty_source": "length"}]
        with pytest.raises(ConfigError):
            validate_config(cfg)

    def test_schema_version_checked(self):
        cfg = tiny_config("x")
        cfg["schema"] = 2
        with pytest.raises(ConfigError):
            validate_config(cfg)

    def test_config_error_exit_code_is_2(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"schema": 1}')
        result = CliRunner().invoke(main, ["run", str(path)])
        assert result.exit_code == 2

    def test_invalid_json_exit_code_is_2(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{nope")
        result = CliRunner().invoke(main, ["run", str(path)])
        assert result.exit_code == 2


class TestPipelineArtifacts:

    def test_expected_files_exist(self, pipeline):
        _, out = pipeline
        for rel in (
            "task/train.csv",
            "task/dev.csv",
            "task/test.csv",
            "crowd/responses.csv",
            "crowd/manifest.json",
            "crowd/predictions.csv",
            "fit/difficulty.csv",
            "fit/ability.csv",
            "fit/fit_report.json",
            "train/full/seed-0/result.json",
            "train/full/seed-1/trace.csv",
            "train/cb-root_learned/seed-0/result.json",
            "analysis/summary.csv",
            "analysis/difficulty_hist.csv",
            "analysis/margin_correlation.json",
        ):
            assert (out / rel).exists(), rel

    def test_difficulties_cover_all_items(self, pipeline):
        _, out = pipeline
        params = read_difficulty_csv(out / "fit" / "difficulty.csv")
        assert len(params.item_ids) == 150 + 30 + 60
        assert params.item_ids[0] == "train:0"

    def test_every_json_carries_config_hash(self, pipeline):
        _, out = pipeline
        for path in out.rglob("*.json"):
            if path.name == "pipeline_state.json":
                continue
            assert "config_hash" in json.loads(path.read_text()), path

    def test_every_csv_carries_config_hash(self, pipeline):
        _, out = pipeline
        for path in out.rglob("*.csv"):
            first = path.read_text().splitlines()[0]
            assert first.startswith("# config_hash="), path

    def test_summary_has_one_row_per_strategy(self, pipeline):
        _, out = pipeline
        lines = [
            l for l in (out / "analysis" / "summary.csv").read_text().splitlines()
            if l and not l.startswith("#")
        ]
        strategies = {l.split(",")[0] for l in lines[1:]}
        assert strategies == {"full", "cb-root_learned"}

    def test_trace_lists_every_epoch_once(self, pipeline):
        _, out = pipeline
        lines = [
            l for l in (out / "train" / "full" / "seed-0" / "trace.csv").read_text().splitlines()
            if l and not l.startswith("#")
        ]
        header, rows = lines[0], lines[1:]
        assert header.split(",")[:3] == ["epoch", "theta_hat", "selected_count"]
        epochs = [int(r.split(",")[0]) for r in rows]
        assert epochs == list(range(len(rows)))

    def test_resume_skips_completed_stages(self, pipeline):
        path, out = pipeline
        tracked = [
            out / "task" / "train.csv",
            out / "crowd" / "responses.csv",
            out / "fit" / "difficulty.csv",
            out / "train" / "full" / "seed-0" / "result.json",
        ]
        before = {p: p.stat().st_mtime_ns for p in tracked}
        run_experiment(path)
        after = {p: p.stat().st_mtime_ns for p in tracked}
        assert before == after

    def test_rerun_with_force_is_byte_identical_up_to_wall_time(self, pipeline):
        path, out = pipeline
        first = snapshot_bytes(out)
        run_experiment(path, force=True)
        second = snapshot_bytes(out)
        assert first.keys() == second.keys()
        for rel in first:
            a, b = first[rel], second[rel]
            if rel.endswith("result.json"):
                a, b = strip_wall_time(a), strip_wall_time(b)
            assert a == b, rel


class TestSubcommands:

    def test_fit_and_score_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        from irt_curriculum.irt import sigmoid

        theta = rng.standard_normal(25)
        b = rng.standard_normal(30)
        cells = (rng.random((25, 30)) < sigmoid(theta[:, None] - b[None, :])).astype(int)
        matrix_path = tmp_path / "responses.csv"
        write_matrix_csv(ResponseMatrix.from_dense(cells), matrix_path)

        runner = CliRunner()
        result = runner.invoke(
            main,
            ["fit", "--responses", str(matrix_path), "--out-dir", str(tmp_path / "fit"),
             "--max-iterations", "300", "--seed", "1"],
        )
        assert result.exit_code == 0, result.output
        params = read_difficulty_csv(tmp_path / "fit" / "difficulty.csv")
        assert len(params.item_ids) == 30
        ids, abilities = read_ability_csv(tmp_path / "fit" / "ability.csv")
        assert len(ids) == 25
        report = json.loads((tmp_path / "fit" / "fit_report.json").read_text())
        assert report["iterations_run"] <= 300

        graded = tmp_path / "graded.csv"
        lines = ["item_id,correct"] + [f"item-{i},{int(cells[0, i])}" for i in range(30)]
        graded.write_text("\n".join(lines) + "\n")
        result = runner.invoke(
            main, ["score", "--difficulties", str(tmp_path / "fit" / "difficulty.csv"),
                   "--responses", str(graded)],
        )
        assert result.exit_code == 0, result.output
        payload = json.loads(result.output)
        assert -4.0 <= payload["theta"] <= 4.0
        assert isinstance(payload["clamped"], bool)

    def test_score_clamps_all_correct(self, tmp_path):
        diff = tmp_path / "d.csv"
        write_difficulty_csv(ItemParams(("a", "b"), np.array([-1.0, 1.0])), diff)
        graded = tmp_path / "g.csv"
        graded.write_text("item_id,correct\na,1\nb,1\n")
        result = CliRunner().invoke(main, ["score", "--difficulties", str(diff), "--responses", str(graded)])
        assert result.exit_code == 0
        payload = json.loads(result.output)
        assert payload["theta"] == 4.0 and payload["clamped"] is True

    def test_score_missing_item_fails_with_stage_exit_code(self, tmp_path):
        diff = tmp_path / "d.csv"
        write_difficulty_csv(ItemParams(("a",), np.array([0.0])), diff)
        graded = tmp_path / "g.csv"
        graded.write_text("item_id,correct\nzzz,1\n")
        result = CliRunner().invoke(main, ["score", "--difficulties", str(diff), "--responses", str(graded)])
        assert result.exit_code == 3

    def test_crowd_generate(self, tmp_path):
        from irt_curriculum.learners import SynthTaskConfig, make_synthetic_task, write_dataset_csv

        task = make_synthetic_task(SynthTaskConfig(n_train=80, n_dev=20, n_test=20, seed=3))
        write_dataset_csv(task.train, tmp_path / "train.csv")
        write_dataset_csv(task.dev, tmp_path / "dev.csv")
        result = CliRunner().invoke(
            main,
            ["crowd", "generate", "--train-csv", str(tmp_path / "train.csv"),
             "--eval-csv", str(tmp_path / "dev.csv"), "--out-dir", str(tmp_path / "crowd"),
             "--ensemble-size", "4", "--train-epochs", "5"],
        )
        assert result.exit_code == 0, result.output
        manifest = json.loads((tmp_path / "crowd" / "manifest.json").read_text())
        assert len(manifest["members"]) == 4
        from irt_curriculum.irt import read_matrix_csv

        matrix = read_matrix_csv(tmp_path / "crowd" / "responses.csv")
        assert matrix.n_items == 100

    def test_analyze_correlation(self, tmp_path):
        ids = tuple(f"i{k}" for k in range(20))
        rng = np.random.default_rng(4)
        x = rng.standard_normal(20)
        write_difficulty_csv(ItemParams(ids, x), tmp_path / "a.csv")
        write_difficulty_csv(ItemParams(ids, -x), tmp_path / "b.csv")
        result = CliRunner().invoke(
            main, ["analyze", "correlation", "--difficulties", str(tmp_path / "a.csv"),
                   "--heuristic", str(tmp_path / "b.csv")],
        )
        assert result.exit_code == 0
        assert json.loads(result.output)["rho"] == -1.0

    def test_analyze_dist(self, tmp_path):
        ids = tuple(f"i{k}" for k in range(10))
        write_difficulty_csv(ItemParams(ids, np.arange(10.0)), tmp_path / "d.csv")
        result = CliRunner().invoke(
            main, ["analyze", "dist", "--difficulties", str(tmp_path / "d.csv"), "--bins", "10"],
        )
        assert result.exit_code == 0
        rows = result.output.strip().splitlines()
        assert rows[0] == "bin_lo,bin_hi,percent"
        assert len(rows) == 11

    def test_analyze_runs_table(self, pipeline):
        _, out = pipeline
        result = CliRunner().invoke(main, ["analyze", "runs", "--results", str(out / "train")])
        assert result.exit_code == 0
        assert "cb-root_learned" in result.output and "full" in result.output

    def test_analyze_runs_empty_dir_fails(self, tmp_path):
        result = CliRunner().invoke(main, ["analyze", "runs", "--results", str(tmp_path)])
        assert result.exit_code == 3

    def test_four_strategy_table_layout(self, tmp_path):
        """full, cb-linear, cb-root, ddaclae x 5 seeds: one mean [±CI] row each."""
        cfg = tiny_config(tmp_path / "out", seeds=(0, 1, 2, 3, 4))
        cfg["strategies"] = [
            {"strategy": "full"},
            {"strategy": "cb-linear"},
            {"strategy": "cb-root"},
            {"strategy": "ddaclae", "probe_size": 100},
        ]
        out = run_experiment(write_config(tmp_path, cfg))
        lines = [
            l for l in (out / "analysis" / "summary.csv").read_text().splitlines()
            if l and not l.startswith("#")
        ]
        rows = {l.split(",")[0]: l.split(",") for l in lines[1:]}
        assert set(rows) == {"full", "cb-linear_learned", "cb-root_learned", "ddaclae"}
        for cells in rows.values():
            assert int(cells[1]) == 5
            assert np.isfinite(float(cells[2])) and np.isfinite(float(cells[3]))

    def test_train_subcommand_filters_strategy(self, tmp_path):
        cfg = tiny_config(tmp_path / "out", seeds=(0,))
        cfg["fit"]["max_iterations"] = 200
        path = write_config(tmp_path, cfg)
        result = CliRunner().invoke(
            main, ["train", "--config", str(path), "--strategy", "cb-root", "--seeds", "1"],
        )
        assert result.exit_code == 0, result.output
        out = tmp_path / "out"
        assert (out / "train" / "cb-root_learned" / "seed-0" / "result.json").exists()
        assert not (out / "train" / "full").exists()


class TestParallelism:

    def test_thread_cap_does_not_change_results(self, tmp_path):
        cfg = tiny_config(tmp_path / "seq", seeds=(0, 1))
        seq_path = write_config(tmp_path, cfg)
        seq_out = run_experiment(seq_path)

        cfg2 = tiny_config(tmp_path / "par", seeds=(0, 1))
        par_path = tmp_path / "exp2.json"
        par_path.write_text(json.dumps(cfg2, indent=2))
        os.environ["IRT_CURRICULUM_THREADS"] = "2"
        try:
            par_out = run_experiment(par_path)
        finally:
            del os.environ["IRT_CURRICULUM_THREADS"]

        for rel in ("train/full/seed-0/trace.csv", "train/cb-root_learned/seed-1/trace.csv"):
            assert (seq_out / rel).read_bytes() == (par_out / rel).read_bytes()
