"""Near-optimal reference transport.

Each link runs fixed-length rounds. At every round boundary a link offers a
class-c flow the capacity that was left over by strictly higher classes in
the previous round, minus the standing queue of classes up to c, split
evenly among its class-c flows. The standing queue is the lowest occupancy
seen during the round, less one MTU per flow for packets that are merely in
transit between pacers. A flow is paced at the minimum offer along its path.
Losses are learned from the network-wide ledger on timeout and repaired at
the head of the paced stream, so no retransmission is spurious.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from typing import Callable, Optional

from core.config import TcpConfig
from core.engine import Engine, Event, Timer
from core.fabric import EgressPort
from core.ledger import RetransmissionReferee
from core.models import FlowCounters, FlowSpec, Packet
from core.tcp import RtoEstimator, SackScoreboard, SenderEnvironment
from core.units import HEADER_BYTES, MSS_BYTES, MTU_BYTES, NS_PER_S

LOGGER = logging.getLogger(__name__)


class LinkTracker:
    """Per-link round accounting for the fair-rate offer."""

    def __init__(
        self,
        name: str,
        rate_bps: int,
        round_ns: int,
        num_classes: int,
        queue_bytes: Callable[[int], int],
    ) -> None:
        if round_ns <= 0:
            raise ValueError(f"round length for {name} must be positive, got {round_ns}")
        self.name = name
        self.rate_bps = rate_bps
        self.round_ns = round_ns
        self.num_classes = num_classes
        self._queue_bytes = queue_bytes
        self._round = 0
        self._bytes_this_round = [0] * num_classes
        self.bytes_last_round = [0] * num_classes
        self.standing_bytes = [0] * num_classes
        self._low_water: list[Optional[int]] = [None] * num_classes
        self.flows: list[dict[int, None]] = [{} for _ in range(num_classes)]

    @classmethod
    def for_port(cls, port: EgressPort, round_ns: int) -> "LinkTracker":
        return cls(
            port.name,
            port.link.rate_bps,
            round_ns,
            port.queues.num_classes,
            port.queues.class_bytes,
        )

    def has_flows(self) -> bool:
        return any(self.flows)

    def flow_count(self, priority_class: int) -> int:
        return len(self.flows[priority_class])

    def add_flow(self, priority_class: int, flow_id: int) -> None:
        self.flows[priority_class][flow_id] = None

    def remove_flow(self, priority_class: int, flow_id: int) -> None:
        self.flows[priority_class].pop(flow_id, None)

    def on_transmit(self, packet: Packet, now: int) -> None:
        self._advance(now // self.round_ns)
        self._bytes_this_round[packet.priority_class] += packet.size
        for c in range(self.num_classes):
            queued = self._queue_bytes(c)
            low = self._low_water[c]
            if low is None or queued < low:
                self._low_water[c] = queued

    def _advance(self, index: int) -> None:
        if index <= self._round:
            return
        if index == self._round + 1:
            self.bytes_last_round = self._bytes_this_round
        else:
            self.bytes_last_round = [0] * self.num_classes
        self._bytes_this_round = [0] * self.num_classes
        self._round = index

    def epoch_roll(self, now: int) -> None:
        """Close rounds up to `now` and fix the per-class standing queue."""

        self._advance(now // self.round_ns)
        for c in range(self.num_classes):
            queued = self._queue_bytes(c)
            low = self._low_water[c]
            self.standing_bytes[c] = queued if low is None else min(low, queued)
        self._low_water = [None] * self.num_classes

    def fair_rate(self, priority_class: int) -> float:
        flows = len(self.flows[priority_class])
        if flows == 0:
            raise ValueError(f"link {self.name} has no class {priority_class} flows to share among")
        bps_per_byte = 8 * NS_PER_S / self.round_ns
        higher = sum(self.bytes_last_round[:priority_class]) * bps_per_byte
        in_transit = MTU_BYTES * sum(len(self.flows[c]) for c in range(priority_class + 1))
        excess = max(0, sum(self.standing_bytes[: priority_class + 1]) - in_transit)
        return max(0.0, (self.rate_bps - higher - excess * bps_per_byte) / flows)


class NearOptSender:
    """Paced sender driven by the coordinator's rate."""

    def __init__(
        self,
        spec: FlowSpec,
        config: TcpConfig,
        env: SenderEnvironment,
        coordinator: "NearOptCoordinator",
        path: list[LinkTracker],
        request_status: Optional[Callable[[], None]] = None,
    ) -> None:
        self.spec = spec
        self.flow_id = spec.flow_id
        self.priority_class = spec.priority_class
        self.size = spec.size
        self.config = config
        self.env = env
        self.coordinator = coordinator
        self.path = path
        self._request_status = request_status
        self.rate = 0.0
        self.snd_una = 0
        self.snd_nxt = 0
        self.scoreboard = SackScoreboard()
        self.estimator = RtoEstimator(config)
        self.packets_sent = 0
        self.packets_retransmitted = 0
        self.protocol_faults = 0
        self.completed_at: Optional[int] = None
        self._window_limit = config.receive_buffer_bytes
        self._repairs: deque[tuple[int, int]] = deque()
        self._referee = RetransmissionReferee(env.ledger, spec.flow_id)
        self._timer = Timer(env.engine, self._on_timer)
        self._pacer: Optional[Event] = None
        self._last_sent_at = 0
        self._last_size = 0

    @property
    def spurious_retransmissions(self) -> int:
        return self._referee.spurious

    def counters(self) -> FlowCounters:
        return FlowCounters(
            packets_sent=self.packets_sent,
            packets_retransmitted=self.packets_retransmitted,
            spurious_retransmissions=self.spurious_retransmissions,
        )

    def start(self, now: int) -> None:
        self.coordinator.register(self, now)

    def next_packet(self, now: int) -> Optional[Packet]:
        # Paced senders push on their own clock; hosts never pull them.
        return None

    def paced_gap(self, size: int) -> int:
        if self.rate <= 0:
            raise ValueError(f"flow {self.flow_id} has no rate to pace at")
        return math.ceil(size * 8 * NS_PER_S / self.rate)

    def set_rate(self, rate: float, now: int) -> None:
        changed = rate != self.rate
        self.rate = rate
        if changed and self._pacer is not None:
            # The pending departure was spaced at the old rate.
            self.env.engine.cancel(self._pacer)
            self._pacer = None
        self._resume(now)

    def _resume(self, now: int) -> None:
        if self._pacer is not None or self.completed_at is not None or self.rate <= 0:
            return
        due = now
        if self._last_size:
            due = max(now, self._last_sent_at + self.paced_gap(self._last_size))
        self._pacer = self.env.engine.schedule(due, self._pace)

    def _pace(self) -> None:
        self._pacer = None
        if self.completed_at is not None or self.rate <= 0:
            return
        now = self.env.engine.now
        packet = self._build_next(now)
        if packet is None:
            return
        self.env.push(packet)
        self._last_sent_at = now
        self._last_size = packet.size
        self._pacer = self.env.engine.schedule(now + self.paced_gap(packet.size), self._pace)

    def _build_next(self, now: int) -> Optional[Packet]:
        while self._repairs:
            start, end = self._repairs.popleft()
            if end <= self.snd_una or self.scoreboard.covers(start, end):
                continue
            self.packets_retransmitted += 1
            self._referee.classify(start, end)
            return self._emit(start, end, now)
        if self.snd_nxt < self.size and self.snd_nxt - self.snd_una < self._window_limit:
            start = self.snd_nxt
            end = min(start + MSS_BYTES, self.size)
            self.snd_nxt = end
            return self._emit(start, end, now)
        return None

    def _emit(self, start: int, end: int, now: int) -> Packet:
        self.packets_sent += 1
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
            sent_at=now,
        )

    def on_ack(self, ack: Packet, now: int) -> None:
        if self.completed_at is not None:
            return
        if ack.ack > self.snd_nxt:
            self.protocol_faults += 1
            LOGGER.warning("Flow %s: ack %s beyond snd_nxt %s ignored", self.flow_id, ack.ack, self.snd_nxt)
            return
        for start, end in ack.sack_blocks:
            start, end = max(start, self.snd_una), min(end, self.snd_nxt)
            if start < end:
                self.scoreboard.add(start, end)
        if ack.ack > self.snd_una:
            self.snd_una = ack.ack
            self.scoreboard.prune(self.snd_una)
            self.estimator.sample(max(0, now - ack.echo_sent_at))
            if self.snd_una >= self.size:
                self.completed_at = now
                self._timer.cancel()
                self.coordinator.unregister(self)
                self.env.finished(self, now)
                return
            if self.snd_nxt > self.snd_una:
                self._timer.arm(now + self.estimator.rto)
            else:
                self._timer.cancel()
        self._resume(now)

    def _on_timer(self) -> None:
        if self.completed_at is not None:
            return
        now = self.env.engine.now
        queued = self._queue_ledger_losses()
        if queued:
            LOGGER.debug("Flow %s: %s dropped segments queued for repair", self.flow_id, queued)
            self._resume(now)
        elif self.snd_nxt > self.snd_una and self._request_status is not None:
            # No data drop pending; an ACK may have been lost, so ask the receiver to restate.
            self._request_status()
        if self.snd_nxt > self.snd_una:
            self._timer.arm(now + self.estimator.rto)

    def _queue_ledger_losses(self) -> int:
        queued = 0
        waiting = set(self._repairs)
        for start, end in self.env.ledger.segments_for_flow(self.flow_id):
            if end <= self.snd_una or self.scoreboard.covers(start, end) or (start, end) in waiting:
                continue
            if self._referee.pending_repairs(start, end) > 0:
                self._repairs.append((start, end))
                queued += 1
        return queued


class NearOptCoordinator:
    """Round clocks and rate assignment for every Near-Opt flow."""

    def __init__(self, engine: Engine, num_classes: int, round_ns: Optional[int] = None) -> None:
        self.engine = engine
        self.num_classes = num_classes
        self.round_ns = round_ns
        self.trackers: dict[str, LinkTracker] = {}
        self.senders: dict[int, NearOptSender] = {}
        self._clocks: dict[int, bool] = {}

    def attach(self, ports: list[EgressPort]) -> None:
        """Track every port from the start so round byte counts are complete."""

        for port in ports:
            round_ns = self.round_ns if self.round_ns is not None else port.link.propagation_ns
            tracker = LinkTracker.for_port(port, round_ns)
            port.transmit_listeners.append(tracker.on_transmit)
            self.trackers[port.name] = tracker

    def path_trackers(self, ports: tuple[EgressPort, ...]) -> list[LinkTracker]:
        return [self.trackers[port.name] for port in ports]

    def register(self, sender: NearOptSender, now: int) -> None:
        self.senders[sender.flow_id] = sender
        for tracker in sender.path:
            tracker.epoch_roll(now)
            tracker.add_flow(sender.priority_class, sender.flow_id)
            self._ensure_clock(tracker.round_ns, now)
        sender.set_rate(self.flow_rate(sender), now)

    def unregister(self, sender: NearOptSender) -> None:
        self.senders.pop(sender.flow_id, None)
        for tracker in sender.path:
            tracker.remove_flow(sender.priority_class, sender.flow_id)

    def flow_rate(self, sender: NearOptSender) -> float:
        return min(tracker.fair_rate(sender.priority_class) for tracker in sender.path)

    def _ensure_clock(self, round_ns: int, now: int) -> None:
        if self._clocks.get(round_ns):
            return
        self._clocks[round_ns] = True
        boundary = (now // round_ns + 1) * round_ns
        self.engine.schedule(boundary, lambda: self._roll(round_ns))

    def _roll(self, round_ns: int) -> None:
        now = self.engine.now
        active = [t for t in self.trackers.values() if t.round_ns == round_ns and t.has_flows()]
        if not active:
            self._clocks[round_ns] = False
            return
        for tracker in active:
            tracker.epoch_roll(now)
        refreshed: dict[int, None] = {}
        for tracker in active:
            for flows in tracker.flows:
                refreshed.update(flows)
        for flow_id in refreshed:
            sender = self.senders.get(flow_id)
            if sender is not None:
                sender.set_rate(self.flow_rate(sender), now)
        self.engine.schedule(now + round_ns, lambda: self._roll(round_ns))
