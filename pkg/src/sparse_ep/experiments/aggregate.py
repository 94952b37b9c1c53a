"""Grid aggregation across seeds and splits."""

from dataclasses import dataclass, field

import pandas as pd

from ..storage.results import RunSummary

GROUP_KEYS = ["method", "n", "m", "s"]
METRICS = ["test_nll", "test_err", "wall_time_s"]


@dataclass
class AggregateConfig:
    """Configuration for aggregation."""

    group_by: list[str] = field(default_factory=lambda: list(GROUP_KEYS))
    metrics: list[str] = field(default_factory=lambda: list(METRICS))
    include_failed: bool = False


class GridAggregator:
    """Summarizes grid rows as mean, std and count per setting."""

    def __init__(self, config: AggregateConfig | None = None):
        self.config = config or AggregateConfig()

    def to_frame(self, summaries: list[RunSummary]) -> pd.DataFrame:
        """One row per run, with memory counts flattened."""
        return pd.DataFrame([s.to_row() for s in summaries])

    def aggregate(self, rows: list[RunSummary] | pd.DataFrame) -> pd.DataFrame:
        """
        Aggregate runs that share a setting.

        Args:
            rows: Run summaries, or a grid table as written by save_grid

        Returns:
            DataFrame with ``<metric>_mean``, ``<metric>_std`` and ``runs`` and
            ``failed`` counts per group, sorted by the group keys
        """
        frame = rows if isinstance(rows, pd.DataFrame) else self.to_frame(rows)
        keys = self.config.group_by
        columns = [*keys, *(f"{m}_{stat}" for m in self.config.metrics for stat in ("mean", "std"))]
        if frame.empty:
            return pd.DataFrame(columns=[*columns, "runs", "failed"])

        frame = frame.copy()
        failed = frame["status"] != "ok"
        counts = (
            frame.assign(failed=failed)
            .groupby(keys, dropna=False, sort=True)
            .agg(runs=("status", "size"), failed=("failed", "sum"))
        )
        if not self.config.include_failed:
            frame = frame[~failed]

        grouped = frame.groupby(keys, dropna=False, sort=True)[self.config.metrics]
        stats = grouped.agg(["mean", "std"])
        stats.columns = [f"{metric}_{stat}" for metric, stat in stats.columns]
        # A single run has no spread.
        std_columns = [c for c in stats.columns if c.endswith("_std")]
        stats[std_columns] = stats[std_columns].fillna(0.0)

        out = counts.join(stats, how="left").reset_index()
        out["failed"] = out["failed"].astype(int)
        return out[[*columns, "runs", "failed"]]

    def paired_gap(
        self, rows: list[RunSummary] | pd.DataFrame, method_a: str, method_b: str, by: str = "n"
    ) -> pd.Series:
        """
        Mean |metric(a) - metric(b)| over runs that share every other setting.

        Args:
            rows: Run summaries or a grid table
            method_a: First method name
            method_b: Second method name
            by: Column to report the gap against

        Returns:
            Series indexed by ``by`` with the mean absolute test NLL gap
        """
        frame = rows if isinstance(rows, pd.DataFrame) else self.to_frame(rows)
        pair_keys = ["n", "m", "s", "seed", "split"]
        frame = frame[frame["status"] == "ok"]
        # Missing minibatch size or split must still pair up.
        frame = frame.assign(**{k: frame[k].fillna(-1) for k in pair_keys})
        a = frame[frame["method"] == method_a].set_index(pair_keys)["test_nll"]
        b = frame[frame["method"] == method_b].set_index(pair_keys)["test_nll"]
        gap = (a - b).abs().dropna()
        return gap.groupby(level=by).mean()


def aggregate_grid(summaries: list[RunSummary]) -> pd.DataFrame:
    """
    Convenience function to aggregate with default config.

    Args:
        summaries: Run summaries to aggregate

    Returns:
        Aggregated DataFrame
    """
    return GridAggregator().aggregate(summaries)
