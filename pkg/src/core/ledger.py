"""Network-wide registry of dropped data segments."""

from __future__ import annotations

from typing import Iterator

SegmentKey = tuple[int, int, int]


class GlobalLossLedger:
    """Every data drop, keyed by (flow_id, start, end).

    A segment dropped several times keeps one entry whose count grows, so the
    count is the number of retransmissions the drop history justifies.
    """

    def __init__(self) -> None:
        self._drops: dict[SegmentKey, int] = {}
        self._by_flow: dict[int, dict[tuple[int, int], None]] = {}

    def __len__(self) -> int:
        return len(self._drops)

    def __iter__(self) -> Iterator[SegmentKey]:
        return iter(self._drops)

    def record_drop(self, flow_id: int, start: int, end: int) -> None:
        key = (flow_id, start, end)
        self._drops[key] = self._drops.get(key, 0) + 1
        self._by_flow.setdefault(flow_id, {})[(start, end)] = None

    def is_lost(self, flow_id: int, start: int, end: int) -> bool:
        return (flow_id, start, end) in self._drops

    def drop_count(self, flow_id: int, start: int, end: int) -> int:
        return self._drops.get((flow_id, start, end), 0)

    def segments_for_flow(self, flow_id: int) -> list[tuple[int, int]]:
        """Dropped ranges of one flow in the order they were first dropped."""

        return list(self._by_flow.get(flow_id, {}))

    def total_drops(self) -> int:
        return sum(self._drops.values())


class RetransmissionReferee:
    """Splits one flow's retransmissions into genuine and spurious.

    A retransmission of a range is genuine while the range has been dropped
    more times than it has already been genuinely repaired.
    """

    def __init__(self, ledger, flow_id: int) -> None:
        self._ledger = ledger
        self._flow_id = flow_id
        self._repaired: dict[tuple[int, int], int] = {}
        self.genuine = 0
        self.spurious = 0

    def pending_repairs(self, start: int, end: int) -> int:
        drops = self._ledger.drop_count(self._flow_id, start, end)
        return drops - self._repaired.get((start, end), 0)

    def classify(self, start: int, end: int) -> bool:
        if self.pending_repairs(start, end) > 0:
            key = (start, end)
            self._repaired[key] = self._repaired.get(key, 0) + 1
            self.genuine += 1
            return True
        self.spurious += 1
        return False
