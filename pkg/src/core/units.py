"""Units and wire constants shared by the simulator.

Simulated time is integer nanoseconds, sizes are integer bytes, rates are
integer bits per second.
"""

from __future__ import annotations

KB = 1024
MB = 1024 * 1024

NS_PER_US = 1_000
NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000

GBPS = 1_000_000_000

MTU_BYTES = 1500
HEADER_BYTES = 40
MSS_BYTES = MTU_BYTES - HEADER_BYTES
# ACKs, probes and probe echoes all travel as minimum-size frames.
CONTROL_PACKET_BYTES = 64

MAX_PRIORITY_CLASSES = 8


def serialization_ns(size_bytes: int, rate_bps: int) -> int:
    """Time to clock `size_bytes` onto a link, rounded up to whole ns."""

    bits_ns = size_bytes * 8 * NS_PER_S
    return -(-bits_ns // rate_bps)


def segment_count(size_bytes: int) -> int:
    return -(-size_bytes // MSS_BYTES)
