"""Discrete-event engine: simulated clock, event heap and random streams."""

from __future__ import annotations

import hashlib
import heapq
import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from core.config import ConfigError

LOGGER = logging.getLogger(__name__)

Action = Callable[[], None]


class SchedulingError(RuntimeError):
    """An event was scheduled before the current simulated time."""


@dataclass(slots=True)
class Event:
    fire_at: int
    sequence: int
    action: Action
    cancelled: bool = False


@dataclass(frozen=True)
class EngineStats:
    events_processed: int
    clock_ns: int


class Engine:
    """Single-threaded event loop ordered by (fire_at, insertion sequence)."""

    def __init__(self) -> None:
        self._now = 0
        self._sequence = 0
        self._heap: list[tuple[int, int, Event]] = []
        self._processed = 0

    @property
    def now(self) -> int:
        return self._now

    @property
    def pending(self) -> int:
        return len(self._heap)

    @property
    def processed(self) -> int:
        return self._processed

    def schedule(self, fire_at: int, action: Action) -> Event:
        if fire_at < self._now:
            raise SchedulingError(f"event at {fire_at}ns scheduled while clock is at {self._now}ns")
        event = Event(fire_at=fire_at, sequence=self._sequence, action=action)
        self._sequence += 1
        heapq.heappush(self._heap, (fire_at, event.sequence, event))
        return event

    def schedule_in(self, delay_ns: int, action: Action) -> Event:
        return self.schedule(self._now + delay_ns, action)

    @staticmethod
    def cancel(ticket: Event) -> None:
        ticket.cancelled = True

    def run_until(self, t_end: int) -> EngineStats:
        """Dispatch every event with fire_at <= t_end.

        The clock is left at the last dispatched event; it never jumps ahead
        to `t_end` on its own.
        """

        processed = 0
        heap = self._heap
        while heap and heap[0][0] <= t_end:
            fire_at, _, event = heapq.heappop(heap)
            if event.cancelled:
                continue
            self._now = fire_at
            event.action()
            processed += 1
        self._processed += processed
        return EngineStats(events_processed=processed, clock_ns=self._now)


class Timer:
    """Re-armable one-shot timer.

    Re-arming to a later deadline leaves the pending heap entry in place and
    lets it reschedule itself when it fires, so arming on every ACK costs no
    heap growth.
    """

    def __init__(self, engine: Engine, callback: Action) -> None:
        self._engine = engine
        self._callback = callback
        self._deadline: Optional[int] = None
        self._event: Optional[Event] = None

    @property
    def armed(self) -> bool:
        return self._deadline is not None

    @property
    def deadline(self) -> Optional[int]:
        return self._deadline

    def remaining(self) -> Optional[int]:
        if self._deadline is None:
            return None
        return max(0, self._deadline - self._engine.now)

    def arm(self, fire_at: int) -> None:
        self._deadline = fire_at
        if self._event is not None and self._event.fire_at <= fire_at:
            return
        if self._event is not None:
            Engine.cancel(self._event)
        self._event = self._engine.schedule(fire_at, self._fire)

    def cancel(self) -> None:
        self._deadline = None

    def _fire(self) -> None:
        self._event = None
        if self._deadline is None:
            return
        if self._engine.now < self._deadline:
            self._event = self._engine.schedule(self._deadline, self._fire)
            return
        self._deadline = None
        self._callback()


def _stream_key(stream_id: str) -> int:
    # A content hash keeps the key independent of PYTHONHASHSEED.
    digest = hashlib.sha256(stream_id.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


class RngStream:
    """Deterministic random source for one stochastic input of a run."""

    def __init__(self, seed: int, stream_id: str) -> None:
        self.seed = seed
        self.stream_id = stream_id
        sequence = np.random.SeedSequence([seed, _stream_key(stream_id)])
        self._generator = np.random.Generator(np.random.PCG64(sequence))

    def draw(self, kind: str, rate: Optional[float] = None) -> float:
        """Draw one real: `uniform` on [0, 1) or `exponential` with mean 1/rate."""

        if kind == "uniform":
            return float(self._generator.random())
        if kind == "exponential":
            if rate is None or rate <= 0:
                raise ConfigError([f"exponential rate must be > 0 for stream {self.stream_id!r}, got {rate}"])
            return float(self._generator.exponential(1.0 / rate))
        raise ConfigError([f"unknown draw kind {kind!r} for stream {self.stream_id!r}"])

    def integer(self, low: int, high: int) -> int:
        """Uniform integer on the closed range [low, high]."""

        return int(self._generator.integers(low, high, endpoint=True))

    def pick(self, candidates: list[int]) -> int:
        return candidates[int(self._generator.integers(0, len(candidates)))]


class RngStreams:
    """Factory handing out one independent stream per label."""

    def __init__(self, seed: int) -> None:
        self.seed = seed
        self._streams: dict[str, RngStream] = {}

    def stream(self, stream_id: str) -> RngStream:
        if stream_id not in self._streams:
            self._streams[stream_id] = RngStream(self.seed, stream_id)
        return self._streams[stream_id]
