"""Ports (interfaces) between the simulation pieces and the outside world.

Hosts only see senders, receivers and probe channels through these
contracts, and the runner only sees result writers and the sweep index
through theirs, so each side can be faked in tests.
"""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING, Optional, Protocol

from core.models import Packet

if TYPE_CHECKING:
    from core.metrics import PairedResult, RunSummary


class SenderPort(Protocol):
    """Flow sender as seen by its host."""

    flow_id: int
    priority_class: int

    def next_packet(self, now: int) -> Optional[Packet]:
        ...

    def on_ack(self, ack: Packet, now: int) -> None:
        ...


class ReceiverPort(Protocol):
    def on_data(self, packet: Packet, now: int) -> Optional[Packet]:
        ...


class ProbeChannelPort(Protocol):
    def on_echo(self, echo: Packet) -> None:
        ...


class LossLedgerPort(Protocol):
    """Drop registry written by the fabric and read by senders and metrics."""

    def record_drop(self, flow_id: int, start: int, end: int) -> None:
        ...

    def is_lost(self, flow_id: int, start: int, end: int) -> bool:
        ...

    def drop_count(self, flow_id: int, start: int, end: int) -> int:
        ...

    def segments_for_flow(self, flow_id: int) -> list[tuple[int, int]]:
        ...


class ResultWriterPort(Protocol):
    def write_run(self, summary: "RunSummary", outdir: Path) -> list[Path]:
        ...

    def write_paired(self, paired: "PairedResult", outdir: Path) -> list[Path]:
        ...


class SweepIndexPort(Protocol):
    def lookup(self, point_key: str, seed: int) -> Optional[list[str]]:
        ...

    def is_complete(self, point_key: str, seed: int, root: str) -> bool:
        ...

    def record(self, point_key: str, seed: int, label: str, overrides_json: str, files: list[str]) -> None:
        ...
