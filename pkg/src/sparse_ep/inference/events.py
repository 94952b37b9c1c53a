"""Progress events from the training loop, fanned out to displays and tallied per run."""

import logging
import time
from collections import Counter
from collections.abc import Callable
from dataclasses import dataclass, field
from enum import Enum

logger = logging.getLogger("sparse-ep.events")


class EventType(str, Enum):
    """What happened in the training loop."""

    START = "start"
    CHECKPOINT = "checkpoint"
    HYPER_STEP = "hyper_step"
    REJECTED = "rejected"
    REPAIR = "repair"
    COMPLETE = "complete"
    ERROR = "error"


@dataclass(frozen=True)
class TrainingEvent:
    """One event; ``elapsed_s`` counts from the start of the run."""

    run_id: str
    event_type: EventType
    step: int
    summary: str = ""
    metrics: dict[str, float | None] = field(default_factory=dict)
    elapsed_s: float = 0.0


class TrainingEventStream:
    """Per-run event fan-out.

    Subscribers are called in order; one that raises is logged and skipped.
    The stream counts events by type so the runner can report rejected
    steps and repairs after training.
    """

    def __init__(self, run_id: str = "train"):
        self.run_id = run_id
        self._subscribers: list[Callable[[TrainingEvent], None]] = []
        self._counts: Counter[EventType] = Counter()
        self._started = time.perf_counter()

    def start(self, run_id: str) -> None:
        """Begin a new run: reset the tallies and the clock."""
        self.run_id = run_id
        self._counts.clear()
        self._started = time.perf_counter()

    def subscribe(self, callback: Callable[[TrainingEvent], None]) -> None:
        self._subscribers.append(callback)

    def emit(
        self, event_type: EventType, step: int, summary: str = "", **metrics: float | None
    ) -> TrainingEvent:
        """Stamp, count and deliver an event. Summaries are cut to 100 characters."""
        event = TrainingEvent(
            run_id=self.run_id,
            event_type=event_type,
            step=step,
            summary=summary[:100],
            metrics=metrics,
            elapsed_s=time.perf_counter() - self._started,
        )
        self._counts[event_type] += 1
        for subscriber in self._subscribers:
            try:
                subscriber(event)
            except Exception as e:
                logger.debug(f"Event subscriber failed on {event_type.value}: {e}")
        return event

    def count(self, event_type: EventType) -> int:
        return self._counts[event_type]
