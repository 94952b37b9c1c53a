"""CLI interface for sparse-ep."""

import json
import logging
import sys
from collections.abc import Callable
from pathlib import Path
from typing import Any

import click
import numpy as np
import typer
from pydantic import ValidationError
from rich.console import Console
from rich.live import Live
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

from ..config import Config, load_config
from ..data.dataset import DataError, load_csv
from ..experiments.grid import GridSpec, run_grid
from ..experiments.runner import (
    EXIT_CODES,
    ExperimentRunner,
    FailureKind,
    RunRequest,
    classify_failure,
    default_damping,
)
from ..inference.events import EventType, TrainingEvent, TrainingEventStream
from ..inference.state import TrainConfig
from ..model.fitc import evaluate as evaluate_model
from ..model.gaussian import moments
from ..model.types import Method, NumericalError
from ..oracle.verify import CheckResult, run_verification
from ..storage.checkpoint import CheckpointError, load_checkpoint, load_standardization
from ..storage.results import RunSummary

app = typer.Typer(
    name="sparse-ep",
    help="Sparse Gaussian process classification trained by EP, SEP or ADF.",
    no_args_is_help=True,
)
console = Console()

EXIT_USAGE = EXIT_CODES[FailureKind.USAGE]
EXIT_NUMERICAL = EXIT_CODES[FailureKind.NUMERICAL]
EXIT_IO = EXIT_CODES[FailureKind.IO]


# Event display helpers
ICONS = {
    EventType.START: ">",
    EventType.CHECKPOINT: "*",
    EventType.HYPER_STEP: "^",
    EventType.REJECTED: "x",
    EventType.REPAIR: "~",
    EventType.COMPLETE: "+",
    EventType.ERROR: "!",
}

COLORS = {
    EventType.START: "blue",
    EventType.CHECKPOINT: "green",
    EventType.HYPER_STEP: "cyan",
    EventType.REJECTED: "magenta",
    EventType.REPAIR: "yellow",
    EventType.COMPLETE: "bright_green",
    EventType.ERROR: "red",
}


def _metrics_text(event: TrainingEvent) -> str:
    m = event.metrics
    if m.get("test_nll") is not None and m.get("test_err") is not None:
        return (
            f"{event.summary}  nll={m['test_nll']:.4f}  err={m['test_err']:.4f}  "
            f"t={event.elapsed_s:.1f}s"
        )
    return event.summary


class LiveTrainingDisplay:
    """Live-updating panel with the latest event of each run."""

    def __init__(self) -> None:
        self.run_states: dict[str, TrainingEvent] = {}
        self.grad_norms: dict[str, float] = {}
        self.live: Live | None = None

    def start(self) -> None:
        self.live = Live(self._render(), console=console, refresh_per_second=4, transient=False)
        self.live.start()

    def stop(self) -> None:
        if self.live:
            self.live.stop()
            self.live = None

    def on_event(self, event: TrainingEvent) -> None:
        if event.event_type == EventType.HYPER_STEP:
            norm = event.metrics.get("grad_norm")
            if norm is not None:
                self.grad_norms[event.run_id] = norm
        else:
            self.run_states[event.run_id] = event
        if self.live:
            self.live.update(self._render())

    def _render(self) -> Panel:
        if not self.run_states:
            return Panel("Waiting for training...", title="Training", border_style="dim")

        table = Table.grid(padding=(0, 1))
        table.add_column("Run", style="cyan", width=36)
        table.add_column("Step", justify="right", width=7)
        table.add_column("|g|", justify="right", width=9)
        table.add_column("Status", width=60)

        for run_id, event in self.run_states.items():
            icon = ICONS.get(event.event_type, ".")
            color = COLORS.get(event.event_type, "white")
            norm = self.grad_norms.get(run_id)

            status = Text()
            status.append(icon + " ", style=color)
            status.append(_metrics_text(event))
            table.add_row(
                run_id, str(event.step), f"{norm:.3g}" if norm is not None else "-", status
            )

        return Panel(table, title="Training", border_style="blue")


class SimpleTrainingDisplay:
    """Append-style event lines for non-TTY output. Accepted hyperparameter steps are skipped."""

    def start(self) -> None:
        pass

    def stop(self) -> None:
        pass

    def on_event(self, event: TrainingEvent) -> None:
        if event.event_type == EventType.HYPER_STEP:
            return
        icon = ICONS.get(event.event_type, ".")
        color = COLORS.get(event.event_type, "white")

        text = Text()
        text.append(f"[{event.run_id}] ", style="dim")
        text.append(icon + " ", style=color)
        text.append(f"step {event.step}: {_metrics_text(event)}")
        console.print(text)


def create_event_display() -> LiveTrainingDisplay | SimpleTrainingDisplay:
    """Create appropriate event display based on terminal capabilities."""
    if console.is_terminal:
        return LiveTrainingDisplay()
    return SimpleTrainingDisplay()


def _setup_logging(out_dir: Path | None, log_level: str, verbose: bool) -> None:
    """Route the package loggers to ``out_dir/run.log`` and, if verbose, the console."""
    level = getattr(logging, log_level.upper(), logging.INFO)
    logger = logging.getLogger("sparse-ep")
    logger.setLevel(level)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(out_dir / "run.log")
        file_handler.setLevel(level)
        file_handler.setFormatter(
            logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
        )
        logger.addHandler(file_handler)

    if verbose:
        console_handler = logging.StreamHandler()
        console_handler.setLevel(level)
        console_handler.setFormatter(logging.Formatter("%(asctime)s - %(levelname)s - %(message)s"))
        logger.addHandler(console_handler)


def _usage_error(message: str) -> typer.Exit:
    console.print(f"[red]Error: {message}[/red]")
    return typer.Exit(EXIT_USAGE)


def _parse_label_column(text: str) -> str | int:
    try:
        return int(text)
    except ValueError:
        return text


def _parse_list(text: str, convert: Callable[[str], Any] = str) -> list[Any]:
    try:
        return [convert(part.strip()) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise _usage_error(f"Cannot parse list {text!r}: {e}") from None


def _parse_synthetic(text: str) -> tuple[int, int]:
    values = _parse_list(text, int)
    if len(values) != 2:
        raise _usage_error(f"--synthetic expects n,d, got {text!r}")
    return values[0], values[1]


def _load(config_path: Path | None) -> Config:
    if config_path is not None and not config_path.exists():
        console.print(f"[red]Config file not found: {config_path}[/red]")
        raise typer.Exit(EXIT_IO)
    return load_config(config_path)


def _build_request(
    config: Config,
    method: Method | None,
    data: Path | None,
    synthetic: tuple[int, int] | None,
    label_col: str,
    no_header: bool,
    test_frac: float | None,
    m: str | None,
    batch: bool,
    minibatch: int | None,
    iters: int | None,
    epochs: int | None,
    lr: float | None,
    damping: float | None,
    jitter: float | None,
    seed: int,
    fixed_hypers: bool,
    cache_upsilon: bool,
    out: Path | None,
) -> RunRequest:
    """Merge flags over the config file; flags win."""
    if batch and minibatch is not None:
        raise _usage_error("--batch and --minibatch are mutually exclusive")
    if (data is None) == (synthetic is None):
        raise _usage_error("Give exactly one of --data and --synthetic")

    request = RunRequest.from_config(config)
    updates: dict[str, Any] = {
        "method": method or Method(config.training.method),
        "minibatch_size": minibatch,
        "damping": damping if damping is not None else default_damping(config, minibatch is None),
        "seed": seed,
        "learn_hypers": not fixed_hypers,
        "cache_upsilon": cache_upsilon or config.training.cache_upsilon,
    }
    if iters is not None:
        updates["iterations"] = iters
    if epochs is not None:
        updates["epochs"] = epochs
    if lr is not None:
        updates["learning_rate"] = lr
    if jitter is not None:
        updates["jitter"] = jitter

    try:
        request.train = TrainConfig.model_validate({**request.train.model_dump(), **updates})
    except ValidationError as e:
        first = e.errors()[0]
        raise _usage_error(f"{'.'.join(map(str, first['loc']))}: {first['msg']}") from None

    request.data_path = data
    request.synthetic = synthetic
    request.label_column = _parse_label_column(label_col)
    request.has_header = not no_header
    request.out_dir = out
    if m is not None:
        request.inducing = m
    if test_frac is not None:
        if not 0.0 < test_frac < 1.0:
            raise _usage_error(f"--test-frac must be in (0, 1), got {test_frac}")
        request.test_fraction = test_frac
    return request


def _print_summary(summary: RunSummary) -> None:
    table = Table(title=f"Run {summary.run_id}")
    table.add_column("Property", style="cyan")
    table.add_column("Value", style="green")

    status = (
        "[green]ok[/green]" if summary.success else f"[red]failed ({summary.failure_kind})[/red]"
    )
    table.add_row("Status", status)
    table.add_row("Method", summary.method)
    table.add_row("n / n_test / d", f"{summary.n} / {summary.n_test} / {summary.d}")
    table.add_row("m", str(summary.m))
    table.add_row("Minibatch", "batch" if summary.s is None else str(summary.s))
    table.add_row("Steps", str(summary.steps))
    if summary.test_nll is not None:
        table.add_row("Test NLL", f"{summary.test_nll:.4f}")
        table.add_row("Test error", f"{summary.test_err:.4f}")
    table.add_row("Wall time", f"{summary.wall_time_s:.2f}s")
    if summary.memory:
        table.add_row("Factor params", f"{summary.memory['factor_params']:,}")
    if summary.error:
        table.add_row("Error", summary.error)
    console.print(table)


def _print_checks(results: list[CheckResult]) -> None:
    table = Table(title="Verification")
    table.add_column("Check", style="cyan")
    table.add_column("Result")
    table.add_column("Max error", justify="right")
    table.add_column("Tolerance", justify="right")
    table.add_column("Detail", style="dim")
    for r in results:
        result = "[green]pass[/green]" if r.passed else "[red]FAIL[/red]"
        table.add_row(r.name, result, f"{r.max_error:.2e}", f"{r.tolerance:.0e}", r.detail)
    console.print(table)


@app.command()
def train(
    method: Method | None = typer.Option(None, "--method", help="Factor update scheme"),
    data: Path | None = typer.Option(None, "--data", help="CSV file with features and a label"),
    synthetic: str | None = typer.Option(
        None, "--synthetic", help="Generate n,d samples from a GP prior instead of --data"
    ),
    label_col: str = typer.Option("-1", "--label-col", help="Label column name or index"),
    no_header: bool = typer.Option(False, "--no-header", help="CSV has no header row"),
    test_frac: float | None = typer.Option(None, "--test-frac", help="Held-out share"),
    m: str | None = typer.Option(None, "--m", help="Inducing points, count or percent (50%)"),
    batch: bool = typer.Option(False, "--batch", help="Full passes over the data (default)"),
    minibatch: int | None = typer.Option(None, "--minibatch", help="Minibatch size"),
    iters: int | None = typer.Option(None, "--iters", help="Batch passes"),
    epochs: int | None = typer.Option(None, "--epochs", help="Minibatch epochs"),
    lr: float | None = typer.Option(None, "--lr", help="Optimizer learning rate"),
    damping: float | None = typer.Option(None, "--damping", help="Site damping in (0, 1]"),
    jitter: float | None = typer.Option(None, "--jitter", help="Gram diagonal jitter"),
    seed: int = typer.Option(0, "--seed", help="Seed for split, inducing points and batches"),
    fixed_hypers: bool = typer.Option(False, "--fixed-hypers", help="Do not learn hypers"),
    cache_upsilon: bool = typer.Option(False, "--cache-upsilon", help="Keep projections"),
    out: Path = typer.Option(Path("out"), "--out", help="Output directory"),
    config_path: Path | None = typer.Option(None, "--config", help="YAML config file"),
    verify: bool = typer.Option(False, "--verify", help="Run the self-checks and exit"),
    quiet: bool = typer.Option(False, "--quiet", "-q", help="Hide live progress"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Log to the console"),
) -> None:
    """Train one model and write checkpoint, trace and summary."""
    config = _load(config_path)

    if verify:
        _setup_logging(None, config.logging.log_level, verbose)
        results = run_verification(seed)
        _print_checks(results)
        raise typer.Exit(0 if all(r.passed for r in results) else EXIT_NUMERICAL)

    request = _build_request(
        config,
        method,
        data,
        _parse_synthetic(synthetic) if synthetic else None,
        label_col,
        no_header,
        test_frac,
        m,
        batch,
        minibatch,
        iters,
        epochs,
        lr,
        damping,
        jitter,
        seed,
        fixed_hypers,
        cache_upsilon,
        out,
    )
    _setup_logging(out, config.logging.log_level, verbose)

    events: TrainingEventStream | None = None
    display: LiveTrainingDisplay | SimpleTrainingDisplay | None = None
    if not quiet:
        events = TrainingEventStream()
        display = create_event_display()
        events.subscribe(display.on_event)
        display.start()

    try:
        result = ExperimentRunner(request, events).run()
    finally:
        if display:
            display.stop()

    _print_summary(result.summary)
    if not result.success:
        console.print(f"[red]Training failed: {result.summary.error}[/red]")
    raise typer.Exit(result.exit_code)


@app.command()
def grid(
    methods: str = typer.Option("ep", "--methods", help="Comma-separated methods"),
    n_values: str | None = typer.Option(None, "--n", help="Comma-separated synthetic sizes"),
    d: int = typer.Option(2, "--d", help="Synthetic input dimension"),
    m_values: str | None = typer.Option(None, "--m", help="Comma-separated inducing counts"),
    seeds: str | None = typer.Option(None, "--seeds", help="Comma-separated seeds"),
    splits: int | None = typer.Option(None, "--splits", help="Seeded random splits"),
    data: Path | None = typer.Option(None, "--data", help="CSV file instead of synthetic"),
    label_col: str = typer.Option("-1", "--label-col", help="Label column name or index"),
    no_header: bool = typer.Option(False, "--no-header", help="CSV has no header row"),
    test_frac: float | None = typer.Option(None, "--test-frac", help="Held-out share"),
    batch: bool = typer.Option(False, "--batch", help="Full passes over the data (default)"),
    minibatch: int | None = typer.Option(None, "--minibatch", help="Minibatch size"),
    iters: int | None = typer.Option(None, "--iters", help="Batch passes"),
    epochs: int | None = typer.Option(None, "--epochs", help="Minibatch epochs"),
    lr: float | None = typer.Option(None, "--lr", help="Optimizer learning rate"),
    damping: float | None = typer.Option(None, "--damping", help="Site damping in (0, 1]"),
    jitter: float | None = typer.Option(None, "--jitter", help="Gram diagonal jitter"),
    fixed_hypers: bool = typer.Option(False, "--fixed-hypers", help="Do not learn hypers"),
    jobs: int | None = typer.Option(None, "--jobs", help="Parallel runs"),
    out: Path = typer.Option(Path("grid"), "--out", help="Output directory"),
    config_path: Path | None = typer.Option(None, "--config", help="YAML config file"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Log to the console"),
) -> None:
    """Run a Cartesian grid of trainings and write grid.csv plus an aggregate."""
    config = _load(config_path)

    try:
        method_list = [Method(name) for name in _parse_list(methods)]
    except ValueError as e:
        raise _usage_error(str(e)) from None
    if not method_list:
        raise _usage_error("--methods needs at least one method")
    sizes = _parse_list(n_values, int) if n_values else []
    if data is None and not sizes:
        raise _usage_error("A synthetic grid needs --n")
    if jobs is not None and jobs < 1:
        raise _usage_error("--jobs must be at least 1")
    if splits is not None and splits < 1:
        raise _usage_error("--splits must be at least 1")

    base = _build_request(
        config,
        method_list[0],
        data,
        None if data is not None else (sizes[0], d),
        label_col,
        no_header,
        test_frac,
        None,
        batch,
        minibatch,
        iters,
        epochs,
        lr,
        damping,
        jitter,
        0,
        fixed_hypers,
        False,
        None,
    )
    spec = GridSpec(
        base=base,
        methods=method_list,
        n_values=sizes,
        m_values=_parse_list(m_values) if m_values else [],
        seeds=_parse_list(seeds, int) if seeds else list(config.grid.seeds),
        splits=splits,
        jobs=jobs or config.grid.jobs,
        out_dir=out,
    )
    _setup_logging(out, config.logging.log_level, verbose)

    def on_result(summary: RunSummary) -> None:
        mark = "[green]ok[/green]" if summary.success else f"[red]{summary.failure_kind}[/red]"
        nll = f"{summary.test_nll:.4f}" if summary.test_nll is not None else "-"
        console.print(f"{mark} {summary.run_id}  nll={nll}")

    summaries = run_grid(spec, on_result)
    failed = sum(1 for s in summaries if not s.success)
    console.print(f"\n[cyan]{len(summaries)} runs, {failed} failed; results in {out}[/cyan]")
    if summaries and failed == len(summaries):
        raise typer.Exit(EXIT_CODES[FailureKind(summaries[0].failure_kind or "internal")])


@app.command()
def evaluate(
    checkpoint: Path = typer.Option(..., "--checkpoint", help="checkpoint.json from train"),
    data: Path = typer.Option(..., "--data", help="Labelled CSV to score"),
    label_col: str = typer.Option("-1", "--label-col", help="Label column name or index"),
    no_header: bool = typer.Option(False, "--no-header", help="CSV has no header row"),
    out: Path | None = typer.Option(None, "--out", help="Write evaluation.json here"),
) -> None:
    """Score a saved model on a labelled CSV."""
    try:
        state = load_checkpoint(checkpoint)
        standardization = load_standardization(checkpoint)
        dataset = load_csv(data, _parse_label_column(label_col), not no_header)
        if dataset.d != state.hypers.d:
            raise DataError(f"Data has {dataset.d} features, model expects {state.hypers.d}")
        X = dataset.X
        if standardization is not None:
            mean, scale = standardization
            X = (X - mean) / scale
        nll, err = evaluate_model(moments(state.q_nat), X, dataset.y, state.hypers)
    except (CheckpointError, DataError, NumericalError, OSError, ValueError) as e:
        console.print(f"[red]Evaluation failed: {e}[/red]")
        raise typer.Exit(EXIT_CODES[classify_failure(e)]) from None

    table = Table(title="Evaluation")
    table.add_column("Metric", style="cyan")
    table.add_column("Value", style="green")
    table.add_row("Instances", str(dataset.n))
    table.add_row("Test NLL", f"{nll:.4f}")
    table.add_row("Test error", f"{err:.4f}")
    console.print(table)

    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        record = {
            "checkpoint": str(checkpoint),
            "data": str(data),
            "n": dataset.n,
            "test_nll": None if np.isnan(nll) else nll,
            "test_err": None if np.isnan(err) else err,
        }
        (out / "evaluation.json").write_text(json.dumps(record, indent=2))


def main() -> None:
    """Entry point for CLI."""
    try:
        code = app(standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(EXIT_USAGE)
    except click.exceptions.ClickException as e:
        e.show()
        sys.exit(EXIT_USAGE)
    sys.exit(code if isinstance(code, int) else 0)


if __name__ == "__main__":
    main()
