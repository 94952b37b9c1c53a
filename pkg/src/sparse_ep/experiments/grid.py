"""Cartesian experiment grids over data size, inducing count, method and seed."""

import itertools
import logging
from collections.abc import Callable
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..model.types import Method
from ..storage.results import GRID_FILE, GRID_SUMMARY_FILE, RunSummary, save_grid
from .aggregate import GridAggregator
from .runner import ExperimentRunner, FailureKind, RunRequest

logger = logging.getLogger("sparse-ep.runner")


@dataclass
class GridSpec:
    """Grid axes around a template request.

    ``n_values`` are total synthetic dataset sizes and are ignored for CSV
    data. With ``splits`` set, the seeds are ``0 .. splits - 1`` and each
    seed also picks the train/test split.
    """

    base: RunRequest
    methods: list[Method] = field(default_factory=lambda: [Method.EP])
    n_values: list[int] = field(default_factory=list)
    m_values: list[int | str] = field(default_factory=list)
    seeds: list[int] = field(default_factory=lambda: [0])
    splits: int | None = None
    jobs: int = 1
    out_dir: Path | None = None

    def seed_list(self) -> list[int]:
        if self.splits is not None:
            return list(range(self.splits))
        return list(self.seeds)

    def expand(self) -> list[RunRequest]:
        """One request per grid cell, in a fixed order."""
        if self.base.data_path is not None:
            sizes: list[int | None] = [None]
        else:
            if not self.n_values:
                if self.base.synthetic is None:
                    raise ValueError("A synthetic grid needs at least one n value")
                sizes = [self.base.synthetic[0]]
            else:
                sizes = list(self.n_values)
        m_values = self.m_values or [self.base.inducing]
        d = self.base.synthetic[1] if self.base.synthetic else 0

        requests = []
        for n, m, method, seed in itertools.product(
            sizes, m_values, self.methods, self.seed_list()
        ):
            train = self.base.train.model_copy(update={"method": Method(method), "seed": seed})
            request = replace(
                self.base,
                train=train,
                inducing=m,
                synthetic=(n, d) if n is not None else None,
                split=seed if self.splits is not None else None,
                out_dir=None,
            )
            if self.out_dir is not None:
                request.out_dir = self.out_dir / "runs" / request.run_id
            requests.append(request)
        return requests


def run_request(request: RunRequest) -> RunSummary:
    """Run one grid cell; top-level so worker processes can import it."""
    return ExperimentRunner(request).run().summary


def _failed_summary(request: RunRequest, error: BaseException) -> RunSummary:
    t = request.train
    return RunSummary(
        run_id=request.run_id,
        method=t.method.value,
        s=t.minibatch_size,
        epochs=t.iterations if t.is_batch else t.epochs,
        seed=t.seed,
        split=request.split,
        learn_hypers=t.learn_hypers,
        status="failed",
        error=str(error),
        failure_kind=FailureKind.INTERNAL.value,
    )


def run_grid(
    spec: GridSpec, on_result: Callable[[RunSummary], None] | None = None
) -> list[RunSummary]:
    """
    Run every grid cell, up to ``spec.jobs`` at a time.

    Failed cells are recorded and the grid continues. Rows come back in
    grid order regardless of completion order.

    Args:
        spec: Grid definition
        on_result: Called with each summary as it is collected

    Returns:
        One RunSummary per cell
    """
    requests = spec.expand()
    logger.info(f"Running grid of {len(requests)} runs with {spec.jobs} job(s)")
    summaries: list[RunSummary] = []

    if spec.jobs <= 1:
        for request in requests:
            summary = run_request(request)
            summaries.append(summary)
            if on_result is not None:
                on_result(summary)
    else:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            futures = [pool.submit(run_request, request) for request in requests]
            for request, future in zip(requests, futures, strict=True):
                try:
                    summary = future.result()
                except Exception as e:
                    logger.error(f"Grid run {request.run_id} crashed: {e}", exc_info=True)
                    summary = _failed_summary(request, e)
                summaries.append(summary)
                if on_result is not None:
                    on_result(summary)

    failed = sum(1 for s in summaries if not s.success)
    if failed:
        logger.warning(f"{failed} of {len(summaries)} grid runs failed")

    if spec.out_dir is not None:
        save_grid(summaries, spec.out_dir / GRID_FILE)
        GridAggregator().aggregate(summaries).to_csv(
            spec.out_dir / GRID_SUMMARY_FILE, index=False, na_rep=""
        )
    return summaries
