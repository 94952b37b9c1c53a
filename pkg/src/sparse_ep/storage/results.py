"""Run summaries, training traces and grid tables on disk."""

import json
import logging
import math
from pathlib import Path
from typing import Any, Literal

import pandas as pd
from pydantic import BaseModel, Field, field_validator

from ..inference.state import TraceLog

logger = logging.getLogger("sparse-ep.storage")

TRACE_COLUMNS = ["step", "wall_time_s", "test_nll", "test_err"]

CHECKPOINT_FILE = "checkpoint.json"
TRACE_FILE = "trace.csv"
SUMMARY_FILE = "summary.json"
GRID_FILE = "grid.csv"
GRID_SUMMARY_FILE = "grid_summary.csv"


class RunSummary(BaseModel):
    """Final metrics and settings of one training run.

    ``s`` is the minibatch size, or None for batch training. ``epochs``
    counts batch passes or minibatch epochs.
    """

    run_id: str = ""
    dataset: str = ""
    method: str
    n: int = Field(default=0, ge=0)
    n_test: int = Field(default=0, ge=0)
    d: int = Field(default=0, ge=0)
    m: int = Field(default=0, ge=0)
    s: int | None = None
    epochs: int = Field(default=0, ge=0)
    seed: int = 0
    split: int | None = None
    steps: int = Field(default=0, ge=0)
    learn_hypers: bool = True
    test_nll: float | None = Field(default=None, ge=0)
    test_err: float | None = Field(default=None, ge=0, le=1)
    wall_time_s: float = 0.0
    memory: dict[str, int] = Field(default_factory=dict)
    status: Literal["ok", "failed"] = "ok"
    error: str | None = None
    failure_kind: str | None = None

    @field_validator("test_nll", "test_err", mode="before")
    @classmethod
    def _nan_to_none(cls, value: Any) -> Any:
        if isinstance(value, float) and math.isnan(value):
            return None
        return value

    @property
    def success(self) -> bool:
        return self.status == "ok"

    def to_row(self) -> dict[str, Any]:
        """Flat record for the grid table; memory counts become ``mem_*`` columns."""
        row = self.model_dump(exclude={"memory"})
        for key, value in self.memory.items():
            row[f"mem_{key}"] = value
        return row


class RunStorage:
    """Artifacts of one run inside an output directory."""

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)

    @property
    def checkpoint_path(self) -> Path:
        return self.out_dir / CHECKPOINT_FILE

    @property
    def trace_path(self) -> Path:
        return self.out_dir / TRACE_FILE

    @property
    def summary_path(self) -> Path:
        return self.out_dir / SUMMARY_FILE

    @property
    def log_path(self) -> Path:
        return self.out_dir / "run.log"

    def save_trace(self, trace: TraceLog) -> Path:
        """
        Write the trace as CSV.

        Args:
            trace: Checkpoints of the run

        Returns:
            Path to the written file
        """
        self.out_dir.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame(trace.to_rows(), columns=TRACE_COLUMNS)
        frame.to_csv(self.trace_path, index=False, na_rep="")
        return self.trace_path

    def load_trace(self) -> pd.DataFrame:
        return pd.read_csv(self.trace_path)

    def save_summary(self, summary: RunSummary) -> Path:
        """
        Write the run summary as JSON.

        Args:
            summary: Summary to write

        Returns:
            Path to the written file
        """
        self.out_dir.mkdir(parents=True, exist_ok=True)
        with open(self.summary_path, "w") as f:
            json.dump(summary.model_dump(mode="json"), f, indent=2)
        logger.info(f"Saved summary to {self.summary_path}")
        return self.summary_path

    def load_summary(self) -> RunSummary | None:
        """
        Read the run summary.

        Returns:
            RunSummary if the file exists, None otherwise
        """
        if not self.summary_path.exists():
            return None
        with open(self.summary_path) as f:
            return RunSummary.model_validate(json.load(f))


def save_grid(summaries: list[RunSummary], path: Path) -> Path:
    """Write one row per run, in the order given."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame([s.to_row() for s in summaries])
    frame.to_csv(path, index=False, na_rep="")
    logger.info(f"Saved {len(summaries)} grid rows to {path}")
    return path


def load_grid(path: Path) -> pd.DataFrame:
    return pd.read_csv(Path(path))
