"""Tests for grid aggregation."""

import pytest

from sparse_ep.experiments.aggregate import AggregateConfig, GridAggregator, aggregate_grid
from sparse_ep.storage.results import RunSummary


def run(method: str, n: int, seed: int, nll: float | None, **kw: object) -> RunSummary:
    values: dict[str, object] = {
        "method": method,
        "n": n,
        "m": 10,
        "seed": seed,
        "test_nll": nll,
        "test_err": None if nll is None else 0.25,
        "wall_time_s": 1.0 + seed,
    }
    values.update(kw)
    return RunSummary.model_validate(values)


class TestGridAggregator:
    """Tests for GridAggregator."""

    def test_mean_std_count(self) -> None:
        """Test statistics across seeds."""
        rows = [run("ep", 100, 0, 0.4), run("ep", 100, 1, 0.6), run("ep", 100, 2, 0.5)]

        out = aggregate_grid(rows)

        assert len(out) == 1
        record = out.iloc[0]
        assert record["test_nll_mean"] == pytest.approx(0.5)
        assert record["test_nll_std"] == pytest.approx(0.1)
        assert record["runs"] == 3
        assert record["failed"] == 0

    def test_groups_sorted(self) -> None:
        """Test one group per method and size in sorted order."""
        rows = [run("sep", 200, 0, 0.3), run("ep", 200, 0, 0.3), run("ep", 100, 0, 0.4)]

        out = aggregate_grid(rows)

        assert list(zip(out["method"], out["n"], strict=True)) == [
            ("ep", 100),
            ("ep", 200),
            ("sep", 200),
        ]
        assert out["test_nll_std"].tolist() == [0.0, 0.0, 0.0]

    def test_failed_runs_counted_not_averaged(self) -> None:
        """Test that failures show in the counts but not in the metrics."""
        rows = [
            run("ep", 100, 0, 0.4),
            run("ep", 100, 1, None, status="failed", failure_kind="numerical"),
        ]

        out = aggregate_grid(rows)

        record = out.iloc[0]
        assert record["runs"] == 2
        assert record["failed"] == 1
        assert record["test_nll_mean"] == pytest.approx(0.4)

    def test_minibatch_size_groups(self) -> None:
        """Test that batch and minibatch runs stay apart."""
        rows = [run("sep", 100, 0, 0.4), run("sep", 100, 0, 0.5, s=20)]

        out = aggregate_grid(rows)

        assert len(out) == 2

    def test_custom_metrics(self) -> None:
        """Test aggregating a chosen metric only."""
        aggregator = GridAggregator(AggregateConfig(metrics=["test_err"]))

        out = aggregator.aggregate([run("ep", 100, 0, 0.4)])

        assert "test_err_mean" in out.columns
        assert "test_nll_mean" not in out.columns

    def test_empty(self) -> None:
        """Test aggregating no runs."""
        out = aggregate_grid([])

        assert out.empty
        assert "runs" in out.columns


class TestPairedGap:
    """Tests for GridAggregator.paired_gap."""

    def test_gap_by_size(self) -> None:
        """Test mean absolute NLL difference between paired runs."""
        rows = [
            run("ep", 100, 0, 0.40),
            run("sep", 100, 0, 0.45),
            run("ep", 100, 1, 0.50),
            run("sep", 100, 1, 0.49),
            run("ep", 200, 0, 0.30),
            run("sep", 200, 0, 0.30),
        ]

        gap = GridAggregator().paired_gap(rows, "ep", "sep")

        assert gap.loc[100] == pytest.approx(0.03)
        assert gap.loc[200] == pytest.approx(0.0)

    def test_unpaired_runs_dropped(self) -> None:
        """Test that runs without a partner do not contribute."""
        rows = [run("ep", 100, 0, 0.4), run("sep", 100, 1, 0.5)]

        gap = GridAggregator().paired_gap(rows, "ep", "sep")

        assert gap.empty
