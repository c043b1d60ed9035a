"""TCP+: low-priority TCP paused by high-priority congestion feedback.

A probe channel per (source host, destination host) sends small
high-priority probes on a fixed interval. The switch marks a probe when the
high-priority backlog at its egress port is over the threshold, and the
receiving host echoes the mark back. A marked echo freezes every low-priority
flow on the channel; an unmarked echo lets them resume.
"""

from __future__ import annotations

import logging
from typing import Callable, Optional

from core.config import TcpConfig
from core.engine import Engine
from core.models import Admission, FlowSpec, Packet, PacketKind
from core.tcp import SenderEnvironment, TcpSender

LOGGER = logging.getLogger(__name__)

UNMARKED = "unmarked"
MARKED = "marked"
NO_FEEDBACK = "none"


class TcpPlusSender(TcpSender):
    """TCP whose transmissions and timers can be frozen.

    While paused nothing is sent, the retransmission timer is stopped with
    its remaining time kept, and ACKs are held back and replayed on resume.
    Congestion state is never touched by a pause.
    """

    def __init__(
        self,
        spec: FlowSpec,
        config: TcpConfig,
        env: SenderEnvironment,
        ecn_capable: bool = False,
    ) -> None:
        super().__init__(spec, config, env, ecn_capable)
        self.paused = False
        self.last_probe_feedback = NO_FEEDBACK
        self.pauses = 0
        self._rto_remaining: Optional[int] = None
        self._deferred: list[tuple[Packet, int]] = []

    def freeze(self, now: int) -> None:
        self.last_probe_feedback = MARKED
        if self.paused or self.completed_at is not None:
            return
        self.paused = True
        self.pauses += 1
        self._rto_remaining = self.retransmission_timer.remaining()
        self.retransmission_timer.cancel()

    def thaw(self, now: int) -> None:
        self.last_probe_feedback = UNMARKED
        if not self.paused:
            return
        self.paused = False
        if self._rto_remaining is not None and self.completed_at is None:
            self.retransmission_timer.arm(now + self._rto_remaining)
        self._rto_remaining = None
        deferred, self._deferred = self._deferred, []
        for ack, arrived_at in deferred:
            if self.completed_at is not None:
                break
            self._process_ack(ack, now, arrived_at)
        if self.completed_at is None:
            self.env.wake(self)

    def next_packet(self, now: int) -> Optional[Packet]:
        if self.paused:
            return None
        return super().next_packet(now)

    def on_ack(self, ack: Packet, now: int) -> None:
        if self.completed_at is not None:
            return
        # An ACK that finishes the flow needs no further sending, so it is not held.
        if self.paused and ack.ack < self.size:
            self._deferred.append((ack, now))
            return
        self._process_ack(ack, now, now)


class ProbeChannel:
    """Probe stream from one host towards one destination host."""

    def __init__(
        self,
        engine: Engine,
        push: Callable[[Packet], Admission],
        channel_id: int,
        src: int,
        dst: int,
        interval_ns: int,
        probe_bytes: int,
    ) -> None:
        self.engine = engine
        self._push = push
        self.channel_id = channel_id
        self.src = src
        self.dst = dst
        self.interval_ns = interval_ns
        self.probe_bytes = probe_bytes
        self.members: dict[int, TcpPlusSender] = {}
        self.state = NO_FEEDBACK
        self.probes_sent = 0
        self.marked_echoes = 0
        self._seq = 0
        self._last_feedback_seq = 0
        self._running = False

    @property
    def running(self) -> bool:
        return self._running

    def attach(self, sender: TcpPlusSender) -> None:
        now = self.engine.now
        self.members[sender.flow_id] = sender
        if self.state == MARKED:
            sender.freeze(now)
        if not self._running:
            self._running = True
            self.engine.schedule(now, self._tick)

    def detach(self, sender: TcpPlusSender) -> None:
        self.members.pop(sender.flow_id, None)

    def cqcn_tick(self) -> Optional[Packet]:
        """Emit the next probe, or stop the channel once it has no members."""

        if not self.members:
            self._running = False
            self.state = NO_FEEDBACK
            return None
        now = self.engine.now
        self._seq += 1
        probe = Packet(
            flow_id=self.channel_id,
            start=0,
            end=0,
            size=self.probe_bytes,
            priority_class=0,
            src=self.src,
            dst=self.dst,
            kind=PacketKind.PROBE,
            ecn_capable=True,
            sent_at=now,
            probe_seq=self._seq,
        )
        self.probes_sent += 1
        self._push(probe)
        self.engine.schedule(now + self.interval_ns, self._tick)
        return probe

    def _tick(self) -> None:
        self.cqcn_tick()

    def on_echo(self, echo: Packet) -> None:
        self.cqcn_feedback(echo.probe_seq, echo.ecn_marked)

    def cqcn_feedback(self, probe_seq: int, marked: bool) -> None:
        if probe_seq <= self._last_feedback_seq:
            return
        self._last_feedback_seq = probe_seq
        now = self.engine.now
        if marked:
            self.marked_echoes += 1
        new_state = MARKED if marked else UNMARKED
        if new_state != self.state:
            LOGGER.debug("Probe channel %s->%s now %s", self.src, self.dst, new_state)
        self.state = new_state
        for sender in list(self.members.values()):
            if marked:
                sender.freeze(now)
            else:
                sender.thaw(now)
