from __future__ import annotations

import pytest

from core.config import ConfigError
from core.engine import Engine, RngStream, RngStreams, SchedulingError, Timer


def test_events_fire_in_time_then_insertion_order() -> None:
    engine = Engine()
    fired: list[str] = []
    engine.schedule(20, lambda: fired.append("late"))
    engine.schedule(10, lambda: fired.append("first"))
    engine.schedule(10, lambda: fired.append("second"))

    stats = engine.run_until(100)

    assert fired == ["first", "second", "late"]
    assert stats.events_processed == 3
    assert engine.now == 20


def test_run_until_leaves_later_events_pending() -> None:
    engine = Engine()
    fired: list[int] = []
    engine.schedule(5, lambda: fired.append(5))
    engine.schedule(50, lambda: fired.append(50))

    engine.run_until(10)

    assert fired == [5]
    assert engine.now == 5
    assert engine.pending == 1


def test_empty_queue_leaves_clock_unchanged() -> None:
    engine = Engine()

    stats = engine.run_until(1_000)

    assert stats.events_processed == 0
    assert engine.now == 0


def test_scheduling_in_the_past_raises() -> None:
    engine = Engine()
    engine.schedule(10, lambda: None)
    engine.run_until(10)

    with pytest.raises(SchedulingError):
        engine.schedule(5, lambda: None)


def test_cancelled_event_does_not_fire() -> None:
    engine = Engine()
    fired: list[int] = []
    ticket = engine.schedule(10, lambda: fired.append(1))
    Engine.cancel(ticket)

    stats = engine.run_until(100)

    assert fired == []
    assert stats.events_processed == 0


def test_events_scheduled_during_dispatch_run_in_same_call() -> None:
    engine = Engine()
    fired: list[int] = []

    def chain() -> None:
        fired.append(engine.now)
        if engine.now < 30:
            engine.schedule_in(10, chain)

    engine.schedule(0, chain)
    engine.run_until(100)

    assert fired == [0, 10, 20, 30]
    assert engine.processed == 4


def test_timer_rearm_later_fires_once_at_new_deadline() -> None:
    engine = Engine()
    fired: list[int] = []
    timer = Timer(engine, lambda: fired.append(engine.now))
    timer.arm(100)
    engine.schedule(50, lambda: timer.arm(300))

    engine.run_until(1_000)

    assert fired == [300]
    assert not timer.armed


def test_timer_rearm_earlier_replaces_pending_event() -> None:
    engine = Engine()
    fired: list[int] = []
    timer = Timer(engine, lambda: fired.append(engine.now))
    timer.arm(500)
    timer.arm(200)

    engine.run_until(1_000)

    assert fired == [200]


def test_timer_cancel_and_remaining() -> None:
    engine = Engine()
    fired: list[int] = []
    timer = Timer(engine, lambda: fired.append(engine.now))
    timer.arm(400)
    engine.schedule(100, lambda: None)
    engine.run_until(100)

    assert timer.remaining() == 300

    timer.cancel()
    engine.run_until(1_000)

    assert fired == []
    assert timer.remaining() is None


def test_streams_are_reproducible_and_independent() -> None:
    first = [RngStream(7, "arrivals").draw("uniform") for _ in range(1)]
    again = [RngStream(7, "arrivals").draw("uniform") for _ in range(1)]
    other = [RngStream(7, "sizes").draw("uniform") for _ in range(1)]

    assert first == again
    assert first != other


def test_stream_factory_returns_same_stream_per_label() -> None:
    streams = RngStreams(3)

    assert streams.stream("endpoints") is streams.stream("endpoints")


def test_exponential_draw_needs_positive_rate() -> None:
    stream = RngStream(1, "arrivals")

    assert stream.draw("exponential", 10.0) >= 0.0
    with pytest.raises(ConfigError):
        stream.draw("exponential", 0.0)
    with pytest.raises(ConfigError):
        stream.draw("gaussian")


def test_exponential_sample_mean_matches_rate() -> None:
    stream = RngStream(5, "arrivals")
    draws = [stream.draw("exponential", 1_000.0) for _ in range(100_000)]

    mean = sum(draws) / len(draws)
    assert abs(mean - 1e-3) <= 0.02 * 1e-3


def test_integer_range_is_inclusive() -> None:
    stream = RngStream(11, "sizes")
    values = {stream.integer(1, 3) for _ in range(200)}

    assert values == {1, 2, 3}
