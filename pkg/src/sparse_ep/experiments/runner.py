"""One training run from data to artifacts."""

import logging
import time
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from ..config import Config
from ..data.dataset import DataError, Dataset, load_csv, resolve_inducing_count, standardize_split
from ..data.synthetic import synthetic_gp
from ..inference.events import EventType, TrainingEventStream
from ..inference.state import ModelState, TraceLog, TrainConfig, memory_footprint
from ..inference.trainer import fit
from ..model.types import HyperParams, Method, NumericalError
from ..storage.checkpoint import CheckpointError, save_checkpoint
from ..storage.results import RunStorage, RunSummary

logger = logging.getLogger("sparse-ep.runner")


class FailureKind(str, Enum):
    """Why a run stopped early; each maps to a process exit code."""

    USAGE = "usage"
    NUMERICAL = "numerical"
    IO = "io"
    INTERNAL = "internal"


EXIT_CODES = {
    FailureKind.USAGE: 1,
    FailureKind.NUMERICAL: 2,
    FailureKind.IO: 3,
    FailureKind.INTERNAL: 1,
}


def classify_failure(exc: BaseException) -> FailureKind:
    if isinstance(exc, NumericalError):
        return FailureKind.NUMERICAL
    if isinstance(exc, DataError | CheckpointError | OSError):
        return FailureKind.IO
    if isinstance(exc, ValueError | ValidationError):
        return FailureKind.USAGE
    return FailureKind.INTERNAL


@dataclass
class RunRequest:
    """Everything needed to reproduce one run.

    Exactly one of ``data_path`` and ``synthetic`` (n, d) selects the data.
    ``inducing`` is a count or a percentage of the training set.
    """

    train: TrainConfig = field(default_factory=TrainConfig)
    inducing: int | str = 200
    data_path: Path | None = None
    label_column: str | int = -1
    has_header: bool = True
    synthetic: tuple[int, int] | None = None
    synthetic_lengthscale: float = 1.0
    synthetic_amplitude: float = 4.0
    test_fraction: float = 0.2
    split: int | None = None
    out_dir: Path | None = None

    @property
    def run_id(self) -> str:
        t = self.train
        mode = "batch" if t.is_batch else f"s{t.minibatch_size}"
        if self.data_path is not None:
            source = Path(self.data_path).stem
        else:
            source = f"n{self.synthetic[0] if self.synthetic else 0}"
        return f"{t.method.value}-{source}-m{self.inducing}-{mode}-seed{t.seed}".replace("%", "pct")

    @classmethod
    def from_config(cls, config: Config, **overrides: object) -> "RunRequest":
        """Request with defaults from ``config``; ``overrides`` win."""
        k, t, o = config.kernel, config.training, config.optimizer
        train = TrainConfig(
            method=Method(t.method),
            # A percentage is resolved against the training set in run().
            m=t.inducing if isinstance(t.inducing, int) else TrainConfig().m,
            iterations=t.iterations,
            epochs=t.epochs,
            learning_rate=o.learning_rate,
            beta1=o.beta1,
            beta2=o.beta2,
            adam_eps=o.eps,
            jitter=k.jitter,
            max_jitter_factor=k.max_jitter_factor,
            jitter_growth=k.jitter_growth,
            initial_lengthscale=k.initial_lengthscale,
            initial_amplitude=k.initial_amplitude,
            cache_upsilon=t.cache_upsilon,
            trace_every=config.trace.every,
            repair_halvings=t.repair_halvings,
        )
        request = cls(
            train=train,
            inducing=t.inducing,
            test_fraction=t.test_fraction,
            synthetic_lengthscale=config.synthetic.lengthscale,
            synthetic_amplitude=config.synthetic.amplitude,
        )
        for name, value in overrides.items():
            if not hasattr(request, name):
                raise ValueError(f"Unknown run option: {name}")
            setattr(request, name, value)
        return request


def default_damping(config: Config, batch: bool) -> float:
    return config.training.batch_damping if batch else config.training.minibatch_damping


@dataclass
class RunResult:
    """Outcome of a run; ``state`` and ``trace`` are None when it failed early."""

    summary: RunSummary
    state: ModelState | None = None
    trace: TraceLog | None = None
    test: Dataset | None = None
    error: BaseException | None = None

    @property
    def success(self) -> bool:
        return self.summary.success

    @property
    def exit_code(self) -> int:
        if self.success:
            return 0
        return EXIT_CODES[FailureKind(self.summary.failure_kind or FailureKind.INTERNAL)]


def load_dataset(request: RunRequest) -> Dataset:
    """Full dataset selected by ``request``, before splitting."""
    if (request.data_path is None) == (request.synthetic is None):
        raise ValueError("Exactly one of a data file and a synthetic size is required")
    if request.data_path is not None:
        return load_csv(request.data_path, request.label_column, request.has_header)

    assert request.synthetic is not None
    n, d = request.synthetic
    if d < 1:
        raise ValueError(f"Synthetic dimension must be positive, got {d}")
    generator = HyperParams(
        log_lengthscales=np.full(d, np.log(request.synthetic_lengthscale)),
        log_amplitude=float(np.log(request.synthetic_amplitude)),
        inducing_points=np.zeros((1, d)),
        jitter=request.train.jitter,
    )
    # Data seed is offset from the split and training seeds.
    return synthetic_gp(n, d, generator, request.train.seed + 1_000_003)


class ExperimentRunner:
    """Runs one training job and always leaves a summary behind."""

    def __init__(self, request: RunRequest, events: TrainingEventStream | None = None):
        self.request = request
        self.events = events if events is not None else TrainingEventStream(request.run_id)
        self.storage = RunStorage(request.out_dir) if request.out_dir is not None else None

    def _base_summary(self) -> RunSummary:
        t = self.request.train
        return RunSummary(
            run_id=self.request.run_id,
            method=t.method.value,
            s=t.minibatch_size,
            epochs=t.iterations if t.is_batch else t.epochs,
            seed=t.seed,
            split=self.request.split,
            learn_hypers=t.learn_hypers,
        )

    def _log_tallies(self) -> None:
        steps = self.events.count(EventType.HYPER_STEP)
        rejected = self.events.count(EventType.REJECTED)
        repairs = self.events.count(EventType.REPAIR)
        if steps or rejected:
            logger.info(f"{steps} hyperparameter steps taken, {rejected} rejected")
        if rejected or repairs:
            logger.warning(
                f"Run {self.request.run_id}: {rejected} rejected hyperparameter steps, "
                f"{repairs} posterior repairs"
            )

    @contextmanager
    def _run_log(self) -> Iterator[None]:
        """Copy the package log into the run directory unless a handler already writes there."""
        if self.storage is None:
            yield
            return
        package_logger = logging.getLogger("sparse-ep")
        path = self.storage.log_path.resolve()
        for existing in package_logger.handlers:
            if not isinstance(existing, logging.FileHandler):
                continue
            if Path(existing.baseFilename).resolve() == path:
                yield
                return

        path.parent.mkdir(parents=True, exist_ok=True)
        handler = logging.FileHandler(path)
        handler.setFormatter(
            logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
        )
        package_logger.addHandler(handler)
        try:
            yield
        finally:
            package_logger.removeHandler(handler)
            handler.close()

    def run(self) -> RunResult:
        """
        Load data, train, evaluate and write artifacts.

        The package log of the run goes to ``run.log`` in its output directory.

        Returns:
            RunResult whose summary records success or the failure kind
        """
        with self._run_log():
            return self._run()

    def _run(self) -> RunResult:
        request = self.request
        summary = self._base_summary()
        started = time.perf_counter()
        result = RunResult(summary=summary)
        self.events.start(request.run_id)

        try:
            data = load_dataset(request)
            summary.dataset = data.name
            train, test = standardize_split(data, request.test_fraction, request.train.seed)
            m = resolve_inducing_count(request.inducing, train.n)
            config = request.train.model_copy(update={"m": m})
            summary.n, summary.n_test, summary.d, summary.m = train.n, test.n, train.d, m

            state, trace = fit(train, config, test=test, events=self.events)
            self._log_tallies()

            last = trace.last
            summary.steps = state.step
            summary.test_nll = last.test_nll if last else None
            summary.test_err = last.test_err if last else None
            summary.memory = memory_footprint(state).to_dict()
            summary.wall_time_s = time.perf_counter() - started
            result.state, result.trace, result.test = state, trace, test

            if self.storage is not None:
                self.storage.save_trace(trace)
                standardization = None
                if train.feature_mean is not None and train.feature_scale is not None:
                    standardization = (train.feature_mean, train.feature_scale)
                save_checkpoint(state, self.storage.checkpoint_path, standardization)
        except Exception as e:
            kind = classify_failure(e)
            if kind == FailureKind.INTERNAL:
                logger.exception(f"Run {request.run_id} failed: {e}")
            else:
                logger.error(f"Run {request.run_id} failed ({kind.value}): {e}")
            summary.status = "failed"
            summary.error = str(e)
            summary.failure_kind = kind.value
            summary.wall_time_s = time.perf_counter() - started
            result.error = e
            self.events.emit(EventType.ERROR, 0, str(e))

        if self.storage is not None:
            try:
                self.storage.save_summary(summary)
            except OSError as e:
                logger.error(f"Could not write summary for {request.run_id}: {e}")
                if summary.success:
                    summary.status = "failed"
                    summary.error = str(e)
                    summary.failure_kind = FailureKind.IO.value

        if summary.success:
            logger.info(
                f"Run {request.run_id} finished in {summary.wall_time_s:.1f}s: "
                f"NLL {summary.test_nll}, error {summary.test_err}"
            )
        return result
