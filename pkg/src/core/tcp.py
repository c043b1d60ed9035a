"""TCP NewReno and Cubic, with or without SACK.

The sender is byte-sequenced with segments on MSS boundaries. Loss recovery
keeps three marks: `high_rxt` (end of the last retransmission), the lost
range ceiling (everything un-SACKed below it is presumed lost) and `recover`
(snd_nxt when recovery began). Without SACK each duplicate ACK stands in for
one delivered segment and only the head segment is presumed lost.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np

from core.config import TcpConfig
from core.engine import Engine, Timer
from core.ledger import RetransmissionReferee
from core.models import Admission, FlowCounters, FlowSpec, Packet, PacketKind
from core.ports import LossLedgerPort
from core.units import CONTROL_PACKET_BYTES, HEADER_BYTES, MSS_BYTES, NS_PER_S

LOGGER = logging.getLogger(__name__)

MAX_BACKOFF = 30
INFINITE_SSTHRESH = float(1 << 62)


class Phase(Enum):
    SLOW_START = "slow-start"
    AVOIDANCE = "avoidance"
    FAST_RECOVERY = "fast-recovery"
    RTO_RECOVERY = "rto-recovery"


def compute_rto(srtt: Optional[int], rttvar: Optional[int], config: TcpConfig, backoff: int = 0) -> int:
    """max(rto_min, srtt + 4*rttvar), doubled per backoff step, capped at max_rto."""

    if srtt is None or rttvar is None:
        base = max(config.rto_min_ns, config.initial_rto_ns)
    else:
        base = max(config.rto_min_ns, srtt + 4 * rttvar)
    return min(config.max_rto_ns, base << backoff)


class RtoEstimator:
    """Smoothed RTT estimator in integer nanoseconds."""

    def __init__(self, config: TcpConfig) -> None:
        self.config = config
        self.srtt: Optional[int] = None
        self.rttvar: Optional[int] = None
        self.backoff = 0

    @property
    def rto(self) -> int:
        return compute_rto(self.srtt, self.rttvar, self.config, self.backoff)

    def sample(self, rtt_ns: int) -> None:
        if self.srtt is None or self.rttvar is None:
            self.srtt = rtt_ns
            self.rttvar = rtt_ns // 2
            return
        self.rttvar = (3 * self.rttvar + abs(self.srtt - rtt_ns)) // 4
        self.srtt = (7 * self.srtt + rtt_ns) // 8

    def back_off(self) -> None:
        if self.backoff < MAX_BACKOFF and self.rto < self.config.max_rto_ns:
            self.backoff += 1

    def reset_backoff(self) -> None:
        self.backoff = 0


class SackScoreboard:
    """Sorted, disjoint, merged byte ranges."""

    def __init__(self) -> None:
        self._ranges: list[tuple[int, int]] = []

    @property
    def ranges(self) -> tuple[tuple[int, int], ...]:
        return tuple(self._ranges)

    def __len__(self) -> int:
        return len(self._ranges)

    def add(self, start: int, end: int) -> None:
        if start >= end:
            return
        merged: list[tuple[int, int]] = []
        placed = False
        for low, high in self._ranges:
            if high < start:
                merged.append((low, high))
            elif low > end:
                if not placed:
                    merged.append((start, end))
                    placed = True
                merged.append((low, high))
            else:
                start = min(start, low)
                end = max(end, high)
        if not placed:
            merged.append((start, end))
        self._ranges = merged

    def prune(self, floor: int) -> None:
        self._ranges = [(max(low, floor), high) for low, high in self._ranges if high > floor]

    def bytes_between(self, low: int, high: int) -> int:
        covered = 0
        for start, end in self._ranges:
            if end <= low:
                continue
            if start >= high:
                break
            covered += min(end, high) - max(start, low)
        return covered

    def highest_end(self) -> int:
        return self._ranges[-1][1] if self._ranges else 0

    def covers(self, start: int, end: int) -> bool:
        return any(low <= start and end <= high for low, high in self._ranges)

    def next_uncovered(self, position: int, limit: int) -> Optional[int]:
        for low, high in self._ranges:
            if high <= position:
                continue
            if low > position:
                break
            position = high
        return position if position < limit else None


class CubicWindow:
    """Cubic window curve in bytes, with time in seconds.

    W(t) = C*(t - K)^3 + origin, measured in MSS units, where origin is the
    window at the last loss and K the time to climb back to it.
    """

    def __init__(self, c: float, beta: float) -> None:
        self.c = c
        self.beta = beta
        self.w_max = 0.0
        self.epoch_start: Optional[int] = None
        self.k = 0.0
        self.origin = 0.0
        self.w_est = 0.0

    def on_loss(self, cwnd: float) -> float:
        self.w_max = float(cwnd)
        self.epoch_start = None
        return max(cwnd * self.beta, 2.0 * MSS_BYTES)

    def on_timeout(self, cwnd: float) -> None:
        self.w_max = float(cwnd)
        self.epoch_start = None

    def start_epoch(self, cwnd: float, now: int) -> None:
        self.epoch_start = now
        if cwnd < self.w_max:
            self.k = float(np.cbrt((self.w_max - cwnd) / MSS_BYTES / self.c))
            self.origin = self.w_max
        else:
            self.k = 0.0
            self.origin = float(cwnd)
        self.w_est = float(cwnd)

    def window_at(self, elapsed_s: float) -> float:
        return self.c * (elapsed_s - self.k) ** 3 * MSS_BYTES + self.origin

    def increment(self, cwnd: float, acked: int, now: int, rtt_ns: int) -> float:
        if self.epoch_start is None:
            self.start_epoch(cwnd, now)
        elapsed = (now + rtt_ns - self.epoch_start) / NS_PER_S
        target = self.window_at(elapsed)
        # Reno-equivalent window keeps Cubic at least as aggressive as Reno.
        self.w_est += 3.0 * (1.0 - self.beta) / (1.0 + self.beta) * acked * MSS_BYTES / cwnd
        target = max(target, self.w_est)
        if target > cwnd:
            return min((target - cwnd) * acked / cwnd, acked / 2.0)
        return MSS_BYTES * acked / (100.0 * cwnd)


@dataclass(frozen=True)
class SenderEnvironment:
    """What a sender may touch in the running simulation."""

    engine: Engine
    ledger: LossLedgerPort
    wake: Callable[[object], None]
    push: Callable[[Packet], Admission]
    finished: Callable[[object, int], None]


class TcpSender:
    """Window-based sender pulled by its host one packet at a time."""

    slow_start_enabled = True

    def __init__(
        self,
        spec: FlowSpec,
        config: TcpConfig,
        env: SenderEnvironment,
        ecn_capable: bool = False,
    ) -> None:
        self.spec = spec
        self.flow_id = spec.flow_id
        self.priority_class = spec.priority_class
        self.size = spec.size
        self.config = config
        self.env = env
        self.ecn_capable = ecn_capable
        self.snd_una = 0
        self.snd_nxt = 0
        self.cwnd = float(config.initial_window_packets * MSS_BYTES)
        self.ssthresh = INFINITE_SSTHRESH
        self.phase = Phase.SLOW_START if self.slow_start_enabled else Phase.AVOIDANCE
        self.estimator = RtoEstimator(config)
        self.scoreboard = SackScoreboard()
        self.dup_acks = 0
        self.recover = 0
        self.high_rxt = 0
        self.lost_ceiling = 0
        self._retransmit_now = False
        self.packets_sent = 0
        self.packets_retransmitted = 0
        self.timeouts = 0
        self.protocol_faults = 0
        self.completed_at: Optional[int] = None
        self.cubic = CubicWindow(config.cubic_c, config.cubic_beta) if config.algorithm == "cubic" else None
        self._window_limit = min(config.send_buffer_bytes, config.receive_buffer_bytes)
        self._referee = RetransmissionReferee(env.ledger, spec.flow_id)
        self._timer = Timer(env.engine, self._on_timer)

    @property
    def highest_acked(self) -> int:
        return self.snd_una

    @property
    def next_to_send(self) -> int:
        return self.snd_nxt

    @property
    def spurious_retransmissions(self) -> int:
        return self._referee.spurious

    @property
    def retransmission_timer(self) -> Timer:
        return self._timer

    def counters(self) -> FlowCounters:
        return FlowCounters(
            packets_sent=self.packets_sent,
            packets_retransmitted=self.packets_retransmitted,
            spurious_retransmissions=self.spurious_retransmissions,
        )

    def start(self, now: int) -> None:
        self.env.wake(self)

    # -- sending -------------------------------------------------------

    def pipe(self) -> int:
        """Bytes presumed in the network (RFC 6675 style)."""

        outstanding = self.snd_nxt - self.snd_una
        if outstanding <= 0:
            return 0
        if self.config.sack_enabled:
            delivered = self.scoreboard.bytes_between(self.snd_una, self.snd_nxt)
        else:
            delivered = min(self.dup_acks * MSS_BYTES, outstanding)
        floor = max(self.snd_una, self.high_rxt)
        lost = 0
        if self.lost_ceiling > floor:
            lost = (self.lost_ceiling - floor) - self.scoreboard.bytes_between(floor, self.lost_ceiling)
        return max(0, outstanding - delivered - lost)

    def on_send_opportunity(self, now: int, budget: Optional[int] = None) -> list[Packet]:
        """Emit packets while the window allows, up to `budget` packets."""

        packets: list[Packet] = []
        while budget is None or len(packets) < budget:
            packet = self.next_packet(now)
            if packet is None:
                break
            packets.append(packet)
        return packets

    def next_packet(self, now: int) -> Optional[Packet]:
        if self.completed_at is not None:
            return None
        if self._retransmit_now:
            # Fast retransmit of the head segment ignores the pipe.
            self._retransmit_now = False
            hole = self._next_retransmission()
            if hole is not None:
                self.high_rxt = hole[1]
                return self._emit(hole[0], hole[1], now, retransmission=True)
        if self.pipe() >= self.cwnd:
            return None
        hole = self._next_retransmission()
        if hole is not None:
            start, end = hole
            self.high_rxt = end
            return self._emit(start, end, now, retransmission=True)
        if self.snd_nxt < self.size and self.snd_nxt - self.snd_una < self._window_limit:
            start = self.snd_nxt
            end = min(start + MSS_BYTES, self.size)
            self.snd_nxt = end
            return self._emit(start, end, now, retransmission=False)
        return None

    def _next_retransmission(self) -> Optional[tuple[int, int]]:
        floor = max(self.snd_una, self.high_rxt)
        if self.lost_ceiling <= floor:
            return None
        if self.config.sack_enabled:
            start = self.scoreboard.next_uncovered(floor, self.lost_ceiling)
            if start is None:
                return None
        else:
            start = floor
        return start, min(start + MSS_BYTES, self.size)

    def _emit(self, start: int, end: int, now: int, retransmission: bool) -> Packet:
        self.packets_sent += 1
        if retransmission:
            self.packets_retransmitted += 1
            self._referee.classify(start, end)
        if not self._timer.armed:
            self._timer.arm(now + self.estimator.rto)
        return Packet(
            flow_id=self.flow_id,
            start=start,
            end=end,
            size=end - start + HEADER_BYTES,
            priority_class=self.priority_class,
            src=self.spec.src,
            dst=self.spec.dst,
            ecn_capable=self.ecn_capable,
            sent_at=now,
        )

    # -- acknowledgments -----------------------------------------------

    def on_ack(self, ack: Packet, now: int) -> None:
        if self.completed_at is not None:
            return
        self._process_ack(ack, now, now)

    def sack_update(self, blocks: tuple[tuple[int, int], ...]) -> SackScoreboard:
        for start, end in blocks:
            start = max(start, self.snd_una)
            end = min(end, self.snd_nxt)
            if start < end:
                self.scoreboard.add(start, end)
        return self.scoreboard

    def _process_ack(self, ack: Packet, now: int, arrived_at: int) -> None:
        if ack.ack > self.snd_nxt:
            self.protocol_faults += 1
            LOGGER.warning(
                "Flow %s: ack %s beyond snd_nxt %s ignored", self.flow_id, ack.ack, self.snd_nxt
            )
            return
        flight_before = self.snd_nxt - self.snd_una
        if self.config.sack_enabled and ack.sack_blocks:
            self.sack_update(ack.sack_blocks)
        self._on_delay_sample(ack, arrived_at)
        if ack.ack > self.snd_una:
            acked = ack.ack - self.snd_una
            self.snd_una = ack.ack
            self.scoreboard.prune(self.snd_una)
            self.estimator.sample(max(0, arrived_at - ack.echo_sent_at))
            self.estimator.reset_backoff()
            self.dup_acks = 0
            if self.snd_una >= self.size:
                self._complete(now)
                return
            self._on_new_ack(acked, now, flight_before)
            if self.snd_nxt > self.snd_una:
                self._timer.arm(now + self.estimator.rto)
            else:
                self._timer.cancel()
        elif self.snd_nxt > self.snd_una:
            self.dup_acks += 1
            self._on_duplicate_ack(now)
        self.env.wake(self)

    def _on_new_ack(self, acked: int, now: int, flight_before: int) -> None:
        if self.phase is Phase.FAST_RECOVERY:
            if self.snd_una >= self.recover:
                self.cwnd = max(self.ssthresh, float(MSS_BYTES))
                self._exit_recovery()
            elif not self.config.sack_enabled:
                # Partial ack: the next hole starts at the new snd_una.
                self.lost_ceiling = max(self.lost_ceiling, min(self.size, self.snd_una + MSS_BYTES))
            return
        if self.phase is Phase.RTO_RECOVERY and self.snd_una >= self.recover:
            self._exit_recovery()
        self._grow(acked, now, flight_before)

    def _exit_recovery(self) -> None:
        self._retransmit_now = False
        self.lost_ceiling = self.snd_una
        self.high_rxt = self.snd_una
        if self.slow_start_enabled and self.cwnd < self.ssthresh:
            self.phase = Phase.SLOW_START
        else:
            self.phase = Phase.AVOIDANCE

    def _grow(self, acked: int, now: int, flight_before: int) -> None:
        if self.slow_start_enabled and self.cwnd < self.ssthresh:
            self.cwnd += acked
            if self.phase is Phase.SLOW_START and self.cwnd >= self.ssthresh:
                self.phase = Phase.AVOIDANCE
        else:
            if self.phase is Phase.SLOW_START:
                self.phase = Phase.AVOIDANCE
            self.cwnd += self._avoidance_increment(acked, now)
        self.cwnd = min(self.cwnd, float(self._window_limit))

    def _avoidance_increment(self, acked: int, now: int) -> float:
        if self.cubic is not None:
            rtt = self.estimator.srtt if self.estimator.srtt is not None else self.config.initial_rto_ns
            return self.cubic.increment(self.cwnd, acked, now, rtt)
        return MSS_BYTES * MSS_BYTES / self.cwnd

    def _on_duplicate_ack(self, now: int) -> None:
        if self.phase is Phase.FAST_RECOVERY:
            if self.config.sack_enabled:
                self.lost_ceiling = max(self.lost_ceiling, self.scoreboard.highest_end())
            return
        if self.phase is Phase.RTO_RECOVERY:
            return
        threshold = self.config.dupack_threshold
        sacked = 0
        if self.config.sack_enabled:
            sacked = self.scoreboard.bytes_between(self.snd_una, self.snd_nxt)
        if self.dup_acks >= threshold or sacked >= threshold * MSS_BYTES:
            self._enter_fast_recovery(now)

    def _enter_fast_recovery(self, now: int) -> None:
        self.ssthresh = self._loss_ssthresh(now)
        self.cwnd = max(self.ssthresh, float(MSS_BYTES))
        self.phase = Phase.FAST_RECOVERY
        self.recover = self.snd_nxt
        self.high_rxt = self.snd_una
        ceiling = self.scoreboard.highest_end() if self.config.sack_enabled else 0
        self.lost_ceiling = max(ceiling, min(self.size, self.snd_una + MSS_BYTES))
        self._retransmit_now = True
        LOGGER.debug("Flow %s: fast retransmit at una=%s cwnd=%s", self.flow_id, self.snd_una, self.cwnd)

    def _loss_ssthresh(self, now: int) -> float:
        if self.cubic is not None:
            return self.cubic.on_loss(self.cwnd)
        return max(self.cwnd // 2, 2.0 * MSS_BYTES)

    def _on_delay_sample(self, ack: Packet, arrived_at: int) -> None:
        return None

    # -- timeouts ------------------------------------------------------

    def _on_timer(self) -> None:
        if self.completed_at is not None or self.snd_nxt <= self.snd_una:
            return
        self.on_timeout(self.env.engine.now)

    def on_timeout(self, now: int) -> None:
        """Collapse to one segment and go back to snd_una."""

        self.timeouts += 1
        self.estimator.back_off()
        self.ssthresh = max(self.cwnd // 2, 2.0 * MSS_BYTES)
        if self.cubic is not None:
            self.cubic.on_timeout(self.cwnd)
        self.cwnd = float(MSS_BYTES)
        self.phase = Phase.RTO_RECOVERY
        self.recover = self.snd_nxt
        self.high_rxt = self.snd_una
        self.lost_ceiling = self.snd_nxt
        self.dup_acks = 0
        self._timer.arm(now + self.estimator.rto)
        LOGGER.debug("Flow %s: timeout at una=%s, rto now %sns", self.flow_id, self.snd_una, self.estimator.rto)
        self.env.wake(self)

    def _complete(self, now: int) -> None:
        self.completed_at = now
        self._timer.cancel()
        self.env.finished(self, now)


class TcpReceiver:
    """Immediate-ACK receiver with up to three SACK blocks."""

    MAX_SACK_BLOCKS = 3

    def __init__(self, spec: FlowSpec, sack_enabled: bool) -> None:
        self.spec = spec
        self.sack_enabled = sack_enabled
        self.rcv_nxt = 0
        self.out_of_order = SackScoreboard()
        self.duplicate_bytes = 0
        self.last_data_sent_at = 0

    @property
    def complete(self) -> bool:
        return self.rcv_nxt >= self.spec.size

    def on_data(self, packet: Packet, now: int) -> Packet:
        self.last_data_sent_at = packet.sent_at
        if packet.end <= self.rcv_nxt or self.out_of_order.covers(packet.start, packet.end):
            self.duplicate_bytes += packet.payload
        elif packet.start <= self.rcv_nxt:
            self.rcv_nxt = packet.end
            ranges = self.out_of_order.ranges
            if ranges and ranges[0][0] <= self.rcv_nxt:
                self.rcv_nxt = max(self.rcv_nxt, ranges[0][1])
            self.out_of_order.prune(self.rcv_nxt)
        else:
            self.out_of_order.add(packet.start, packet.end)
        return Packet(
            flow_id=packet.flow_id,
            start=0,
            end=0,
            size=CONTROL_PACKET_BYTES,
            priority_class=packet.priority_class,
            src=packet.dst,
            dst=packet.src,
            kind=PacketKind.ACK,
            sent_at=now,
            ack=self.rcv_nxt,
            sack_blocks=self._sack_blocks(packet) if self.sack_enabled else (),
            echo_sent_at=packet.sent_at,
            one_way_delay_ns=now - packet.sent_at,
        )

    def _sack_blocks(self, packet: Packet) -> tuple[tuple[int, int], ...]:
        ranges = list(self.out_of_order.ranges)
        if not ranges:
            return ()
        first = [block for block in ranges if block[0] <= packet.start < block[1]]
        rest = [block for block in reversed(ranges) if block not in first]
        return tuple((first + rest)[: self.MAX_SACK_BLOCKS])

    def status_ack(self, now: int) -> Packet:
        """Cumulative ACK restating receiver state without new data."""

        return Packet(
            flow_id=self.spec.flow_id,
            start=0,
            end=0,
            size=CONTROL_PACKET_BYTES,
            priority_class=self.spec.priority_class,
            src=self.spec.dst,
            dst=self.spec.src,
            kind=PacketKind.ACK,
            sent_at=now,
            ack=self.rcv_nxt,
            sack_blocks=tuple(reversed(self.out_of_order.ranges))[: self.MAX_SACK_BLOCKS] if self.sack_enabled else (),
            echo_sent_at=self.last_data_sent_at,
            one_way_delay_ns=0,
        )
