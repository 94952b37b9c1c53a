"""Tests for the command-line interface."""

import json
from pathlib import Path

import numpy as np
import pytest
from typer.testing import CliRunner

from sparse_ep.cli.main import app
from sparse_ep.data.dataset import Dataset, write_csv

runner = CliRunner()


@pytest.fixture
def data_csv(tmp_path: Path) -> Path:
    rng = np.random.default_rng(0)
    X = rng.standard_normal((50, 2))
    y = np.where(X[:, 0] + 0.3 * rng.standard_normal(50) > 0, 1.0, -1.0)
    path = tmp_path / "data.csv"
    write_csv(Dataset(X=X, y=y), path)
    return path


class TestTrainCommand:
    """Tests for the train command."""

    def test_synthetic_run(self, tmp_path: Path) -> None:
        """Test a small synthetic run end to end."""
        out = tmp_path / "run"

        result = runner.invoke(
            app,
            ["train", "--synthetic", "60,2", "--m", "5", "--iters", "2", "--out", str(out), "-q"],
        )

        assert result.exit_code == 0, result.output
        for name in ("checkpoint.json", "trace.csv", "summary.json", "run.log"):
            assert (out / name).exists()
        summary = json.loads((out / "summary.json").read_text())
        assert summary["method"] == "ep"
        assert summary["steps"] == 2

    def test_minibatch_sep_on_csv(self, tmp_path: Path, data_csv: Path) -> None:
        """Test minibatch SEP with fixed hyperparameters on a CSV file."""
        out = tmp_path / "run"

        result = runner.invoke(
            app,
            [
                "train", "--method", "sep", "--data", str(data_csv), "--m", "20%",
                "--minibatch", "10", "--epochs", "2", "--fixed-hypers", "--out", str(out), "-q",
            ],
        )

        assert result.exit_code == 0, result.output
        summary = json.loads((out / "summary.json").read_text())
        assert summary["s"] == 10
        assert summary["m"] == 8
        assert summary["learn_hypers"] is False

    def test_batch_and_minibatch_conflict(self, tmp_path: Path) -> None:
        """Test that --batch and --minibatch together are a usage error."""
        result = runner.invoke(
            app,
            [
                "train", "--synthetic", "60,2", "--batch", "--minibatch", "10",
                "--out", str(tmp_path),
            ],
        )

        assert result.exit_code == 1
        assert "mutually exclusive" in result.output

    def test_needs_a_data_source(self, tmp_path: Path) -> None:
        """Test that one of --data and --synthetic is required."""
        result = runner.invoke(app, ["train", "--out", str(tmp_path)])

        assert result.exit_code == 1

    def test_invalid_damping(self, tmp_path: Path) -> None:
        """Test damping outside (0, 1]."""
        result = runner.invoke(
            app, ["train", "--synthetic", "60,2", "--damping", "1.5", "--out", str(tmp_path)]
        )

        assert result.exit_code == 1

    def test_missing_data_file(self, tmp_path: Path) -> None:
        """Test the I/O exit code."""
        out = tmp_path / "run"

        result = runner.invoke(
            app, ["train", "--data", str(tmp_path / "absent.csv"), "--out", str(out), "-q"]
        )

        assert result.exit_code == 3
        summary = json.loads((out / "summary.json").read_text())
        assert summary["failure_kind"] == "io"

    def test_missing_config_file(self, tmp_path: Path) -> None:
        """Test a --config path that does not exist."""
        result = runner.invoke(
            app, ["train", "--synthetic", "60,2", "--config", str(tmp_path / "none.yaml")]
        )

        assert result.exit_code == 3

    def test_config_file_defaults(self, tmp_path: Path) -> None:
        """Test that the config file supplies defaults the flags do not set."""
        config = tmp_path / "config.yaml"
        config.write_text("training:\n  method: adf\n  iterations: 1\n  inducing: 4\n")
        out = tmp_path / "run"

        result = runner.invoke(
            app, ["train", "--synthetic", "40,2", "--config", str(config), "--out", str(out), "-q"]
        )

        assert result.exit_code == 0, result.output
        summary = json.loads((out / "summary.json").read_text())
        assert summary["method"] == "adf"
        assert summary["m"] == 4
        assert summary["steps"] == 1

    def test_verify(self) -> None:
        """Test that the self-checks pass."""
        result = runner.invoke(app, ["train", "--verify"])

        assert result.exit_code == 0, result.output
        assert "Verification" in result.output


class TestGridCommand:
    """Tests for the grid command."""

    def test_synthetic_grid(self, tmp_path: Path) -> None:
        """Test a two-method grid."""
        result = runner.invoke(
            app,
            [
                "grid", "--methods", "adf,ep", "--n", "40", "--m", "3", "--seeds", "0,1",
                "--iters", "1", "--out", str(tmp_path),
            ],
        )

        assert result.exit_code == 0, result.output
        assert (tmp_path / "grid.csv").exists()
        assert (tmp_path / "grid_summary.csv").exists()
        assert len((tmp_path / "grid.csv").read_text().strip().splitlines()) == 5

    def test_unknown_method(self, tmp_path: Path) -> None:
        """Test an invalid method name."""
        result = runner.invoke(
            app, ["grid", "--methods", "ep,vi", "--n", "40", "--out", str(tmp_path)]
        )

        assert result.exit_code == 1

    def test_synthetic_grid_needs_sizes(self, tmp_path: Path) -> None:
        """Test that a synthetic grid requires --n."""
        result = runner.invoke(app, ["grid", "--out", str(tmp_path)])

        assert result.exit_code == 1

    def test_all_runs_failed(self, tmp_path: Path) -> None:
        """Test a nonzero exit when every run fails."""
        result = runner.invoke(
            app,
            [
                "grid", "--data", str(tmp_path / "absent.csv"), "--splits", "2",
                "--out", str(tmp_path),
            ],
        )

        assert result.exit_code == 3


class TestEvaluateCommand:
    """Tests for the evaluate command."""

    def test_evaluate_checkpoint(self, tmp_path: Path, data_csv: Path) -> None:
        """Test scoring a trained model and writing evaluation.json."""
        run_dir = tmp_path / "run"
        trained = runner.invoke(
            app,
            [
                "train", "--data", str(data_csv), "--m", "6", "--iters", "3",
                "--out", str(run_dir), "-q",
            ],
        )
        assert trained.exit_code == 0, trained.output

        result = runner.invoke(
            app,
            [
                "evaluate", "--checkpoint", str(run_dir / "checkpoint.json"),
                "--data", str(data_csv), "--out", str(tmp_path / "eval"),
            ],
        )

        assert result.exit_code == 0, result.output
        record = json.loads((tmp_path / "eval" / "evaluation.json").read_text())
        assert record["n"] == 50
        assert 0.0 < record["test_nll"] < 1.0
        assert 0.0 <= record["test_err"] <= 1.0

    def test_missing_checkpoint(self, tmp_path: Path, data_csv: Path) -> None:
        """Test the I/O exit code for a missing checkpoint."""
        result = runner.invoke(
            app,
            ["evaluate", "--checkpoint", str(tmp_path / "none.json"), "--data", str(data_csv)],
        )

        assert result.exit_code == 3
