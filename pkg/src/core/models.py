"""Core domain models.

Packets, flow descriptions and flow outcomes shared by the fabric, the
transports, the metrics and the adapters.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

from core.units import KB, MB


class PacketKind(Enum):
    DATA = "data"
    ACK = "ack"
    PROBE = "probe"
    ECHO = "echo"


class Admission(Enum):
    ACCEPTED = "accepted"
    DROPPED = "dropped"


@dataclass(slots=True)
class Packet:
    """One frame on the wire.

    Data packets cover the byte range [start, end) of their flow. ACKs carry
    the cumulative ack, SACK blocks and the echoed send timestamp of the data
    packet that triggered them.
    """

    flow_id: int
    start: int
    end: int
    size: int
    priority_class: int
    src: int
    dst: int
    kind: PacketKind = PacketKind.DATA
    ecn_capable: bool = False
    ecn_marked: bool = False
    sent_at: int = 0
    enqueued_at: int = 0
    ack: int = 0
    sack_blocks: tuple[tuple[int, int], ...] = ()
    echo_sent_at: int = 0
    one_way_delay_ns: int = 0
    probe_seq: int = 0

    @property
    def is_probe(self) -> bool:
        return self.kind is PacketKind.PROBE

    @property
    def payload(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class FlowSpec:
    flow_id: int
    src: int
    dst: int
    size: int
    priority_class: int
    arrival_time: int
    # DAS duplicates point at the primary request they shadow.
    twin_of: Optional[int] = None


SMALL = "small"
MEDIUM = "medium"
LONG = "long"
SIZE_CLASSES = (SMALL, MEDIUM, LONG)

SMALL_FLOW_LIMIT = 50 * KB
LONG_FLOW_LIMIT = MB


def size_class_of(size: int) -> str:
    """small < 50KB, long > 1MB, medium in between (inclusive)."""

    if size < SMALL_FLOW_LIMIT:
        return SMALL
    if size > LONG_FLOW_LIMIT:
        return LONG
    return MEDIUM


@dataclass(frozen=True)
class FlowCounters:
    """Per-flow packet accounting reported by a sender at completion."""

    packets_sent: int
    packets_retransmitted: int
    spurious_retransmissions: int


@dataclass(frozen=True)
class FlowRecord:
    flow_id: int
    size: int
    priority_class: int
    size_class: str
    arrival_time: int
    completion_time: int
    fct: int
    packets_sent: int
    packets_retransmitted: int
    spurious_retransmissions: int
