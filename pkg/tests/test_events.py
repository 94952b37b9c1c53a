"""Tests for the training event stream."""

import pytest

from sparse_ep.inference.events import EventType, TrainingEvent, TrainingEventStream


class TestTrainingEventStream:
    """Tests for TrainingEventStream class."""

    def test_subscribers_receive_events(self) -> None:
        """Test fan-out to every subscriber, stamped with the run id."""
        stream = TrainingEventStream("run-1")
        first: list[TrainingEvent] = []
        second: list[TrainingEvent] = []
        stream.subscribe(first.append)
        stream.subscribe(second.append)

        event = stream.emit(EventType.CHECKPOINT, 3, "pass 3", test_nll=0.5)

        assert first == [event]
        assert second == [event]
        assert event.run_id == "run-1"
        assert event.step == 3
        assert event.metrics == {"test_nll": 0.5}
        assert event.elapsed_s >= 0.0

    def test_failing_subscriber_is_ignored(self) -> None:
        """Test that a raising subscriber does not block the others."""
        stream = TrainingEventStream()
        received: list[TrainingEvent] = []

        def broken(event: TrainingEvent) -> None:
            raise RuntimeError("display gone")

        stream.subscribe(broken)
        stream.subscribe(received.append)

        stream.emit(EventType.START, 0)

        assert len(received) == 1
        assert stream.count(EventType.START) == 1

    def test_counts_by_type(self) -> None:
        """Test tallies per event type."""
        stream = TrainingEventStream()
        for event_type in (EventType.HYPER_STEP, EventType.HYPER_STEP, EventType.REJECTED):
            stream.emit(event_type, 1)

        assert stream.count(EventType.HYPER_STEP) == 2
        assert stream.count(EventType.REJECTED) == 1
        assert stream.count(EventType.ERROR) == 0

    def test_start_resets_run(self) -> None:
        """Test that starting a run clears the tallies and renames the stream."""
        stream = TrainingEventStream()
        stream.emit(EventType.REPAIR, 2)

        stream.start("run-2")
        event = stream.emit(EventType.START, 0)

        assert stream.count(EventType.REPAIR) == 0
        assert event.run_id == "run-2"

    def test_summary_truncated(self) -> None:
        """Test that long summaries are cut to 100 characters."""
        event = TrainingEventStream().emit(EventType.ERROR, 0, "x" * 250)

        assert len(event.summary) == 100

    def test_event_is_frozen(self) -> None:
        """Test that delivered events cannot be altered by a subscriber."""
        event = TrainingEventStream().emit(EventType.START, 0)

        with pytest.raises(AttributeError):
            event.step = 5  # type: ignore[misc]
