"""Hosts, links and the single switch.

Each directional link is driven by an `EgressPort`: a `PortQueueSet` (one
FIFO per priority class, static byte allocations, drop-tail admission, ECN
marking) drained by a scheduler onto the wire. Hosts pull window-limited
senders into their NIC queue one packet at a time so the host scheduler,
not sender call order, decides which class reaches the driver queue first.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Optional, Sequence

from core.config import ConfigError, FabricConfig, TopologyConfig
from core.engine import Engine, Event
from core.models import Admission, Packet, PacketKind
from core.ports import ProbeChannelPort, ReceiverPort, SenderPort
from core.units import CONTROL_PACKET_BYTES, MTU_BYTES, NS_PER_S, serialization_ns

LOGGER = logging.getLogger(__name__)


class UnknownClassError(ConfigError):
    """A packet carried a priority class the port was not configured for."""


@dataclass(slots=True)
class ClassQueue:
    packets: deque = field(default_factory=deque)
    bytes: int = 0
    capacity: Optional[int] = None


class StrictPriorityScheduler:
    """Always serves the lowest-index nonempty class."""

    def on_enqueue(self, priority_class: int) -> None:
        return None

    def pick(self, queues: list[ClassQueue]) -> Optional[int]:
        for index, queue in enumerate(queues):
            if queue.packets:
                return index
        return None


class DeficitRoundRobinScheduler:
    """Weighted fair queueing realized as deficit round robin.

    Each class earns `weight * quantum_unit` bytes of credit per visit; a
    class is served while its head packet fits in its credit.
    """

    def __init__(self, weights: Sequence[int], quantum_unit: int = MTU_BYTES) -> None:
        self.quanta = [weight * quantum_unit for weight in weights]
        self.deficits = [0 for _ in weights]
        self._granted = [False for _ in weights]
        self._active: deque[int] = deque()
        self._listed = [False for _ in weights]

    def on_enqueue(self, priority_class: int) -> None:
        if not self._listed[priority_class]:
            self._listed[priority_class] = True
            self._active.append(priority_class)

    def pick(self, queues: list[ClassQueue]) -> Optional[int]:
        active = self._active
        while active:
            index = active[0]
            queue = queues[index]
            if not queue.packets:
                active.popleft()
                self._listed[index] = False
                self._granted[index] = False
                self.deficits[index] = 0
                continue
            if not self._granted[index]:
                self.deficits[index] += self.quanta[index]
                self._granted[index] = True
            head_size = queue.packets[0].size
            if head_size <= self.deficits[index]:
                self.deficits[index] -= head_size
                return index
            self._granted[index] = False
            active.rotate(-1)
        return None


class FifoScheduler:
    """Single shared FIFO across classes (fair-share baseline)."""

    def __init__(self) -> None:
        self._order: deque[int] = deque()

    def on_enqueue(self, priority_class: int) -> None:
        self._order.append(priority_class)

    def pick(self, queues: list[ClassQueue]) -> Optional[int]:
        if not self._order:
            return None
        return self._order.popleft()


def make_scheduler(variant: str, weights: Sequence[int]):
    if variant == "strict":
        return StrictPriorityScheduler()
    if variant == "wfq":
        return DeficitRoundRobinScheduler(weights)
    if variant == "fifo":
        return FifoScheduler()
    raise ConfigError([f"unknown scheduler variant {variant!r}"])


class PortQueueSet:
    """Per-class queues of one egress port with byte conservation counters."""

    def __init__(
        self,
        name: str,
        capacities: Sequence[Optional[int]],
        scheduler,
        ecn_thresholds: Optional[Sequence[int]] = None,
        probe_threshold: Optional[int] = None,
        packet_limit: Optional[int] = None,
        shared_capacity: Optional[int] = None,
    ) -> None:
        self.name = name
        self.queues = [ClassQueue(capacity=capacity) for capacity in capacities]
        self.scheduler = scheduler
        self.ecn_thresholds = tuple(ecn_thresholds) if ecn_thresholds is not None else None
        self.probe_threshold = probe_threshold
        self.packet_limit = packet_limit
        # When set, all classes draw from one pool and per-class caps are ignored.
        self.shared_capacity = shared_capacity
        classes = len(self.queues)
        self.enqueued_bytes = [0] * classes
        self.dequeued_bytes = [0] * classes
        self.dropped_bytes = [0] * classes
        self.dropped_packets = [0] * classes
        self.total_bytes = 0
        self.total_packets = 0

    @property
    def num_classes(self) -> int:
        return len(self.queues)

    def class_bytes(self, priority_class: int) -> int:
        return self.queues[priority_class].bytes

    def class_packets(self, priority_class: int) -> int:
        return len(self.queues[priority_class].packets)

    def enqueue(self, packet: Packet, now: int) -> Admission:
        cls = packet.priority_class
        if not 0 <= cls < len(self.queues):
            raise UnknownClassError([f"port {self.name} has no priority class {cls}"])
        queue = self.queues[cls]
        self.enqueued_bytes[cls] += packet.size
        if self._rejects(queue, packet.size):
            self.dropped_bytes[cls] += packet.size
            self.dropped_packets[cls] += 1
            return Admission.DROPPED
        self._mark(packet, queue)
        packet.enqueued_at = now
        queue.packets.append(packet)
        queue.bytes += packet.size
        self.total_bytes += packet.size
        self.total_packets += 1
        self.scheduler.on_enqueue(cls)
        return Admission.ACCEPTED

    def dequeue(self) -> Optional[Packet]:
        index = self.scheduler.pick(self.queues)
        if index is None:
            return None
        queue = self.queues[index]
        packet = queue.packets.popleft()
        queue.bytes -= packet.size
        self.total_bytes -= packet.size
        self.total_packets -= 1
        self.dequeued_bytes[index] += packet.size
        return packet

    def is_conserved(self) -> bool:
        """Offered bytes = dequeued + dropped + resident, per class."""

        return all(
            self.enqueued_bytes[c] == self.dequeued_bytes[c] + self.dropped_bytes[c] + queue.bytes
            for c, queue in enumerate(self.queues)
        )

    def _rejects(self, queue: ClassQueue, size: int) -> bool:
        if self.packet_limit is not None and self.total_packets >= self.packet_limit:
            return True
        if self.shared_capacity is not None:
            return self.total_bytes + size > self.shared_capacity
        return queue.capacity is not None and queue.bytes + size > queue.capacity

    def _mark(self, packet: Packet, queue: ClassQueue) -> None:
        shared = self.shared_capacity is not None
        if packet.is_probe:
            # Probes measure the high-priority backlog they are trying to avoid.
            if self.probe_threshold is not None:
                backlog = self.total_bytes if shared else self.queues[0].bytes
                if backlog >= self.probe_threshold:
                    packet.ecn_marked = True
            return
        if packet.ecn_capable and self.ecn_thresholds is not None:
            backlog = self.total_bytes if shared else queue.bytes
            if backlog >= self.ecn_thresholds[packet.priority_class]:
                packet.ecn_marked = True


@dataclass(frozen=True)
class Link:
    name: str
    rate_bps: int
    propagation_ns: int

    def serialization_ns(self, size_bytes: int) -> int:
        return serialization_ns(size_bytes, self.rate_bps)


class UtilizationMeter:
    """Bytes started on a link, bucketed into fixed time bins."""

    def __init__(self, rate_bps: int, bin_ns: int) -> None:
        self.rate_bps = rate_bps
        self.bin_ns = bin_ns
        self.bins: dict[int, int] = {}
        self.total_bytes = 0

    def record(self, now: int, size: int) -> None:
        index = now // self.bin_ns
        self.bins[index] = self.bins.get(index, 0) + size
        self.total_bytes += size

    def timeline(self, until_ns: Optional[int] = None) -> list[tuple[int, int, float]]:
        if not self.bins and until_ns is None:
            return []
        last = max(self.bins) if self.bins else 0
        if until_ns is not None:
            last = max(last, (until_ns - 1) // self.bin_ns)
        capacity_bytes = self.rate_bps * self.bin_ns / (8 * NS_PER_S)
        rows = []
        for index in range(last + 1):
            sent = self.bins.get(index, 0)
            rows.append((index * self.bin_ns, sent, sent / capacity_bytes))
        return rows


class EgressPort:
    """One direction of a link: queue set, scheduler and transmitter."""

    def __init__(
        self,
        engine: Engine,
        link: Link,
        queues: PortQueueSet,
        deliver: Callable[[Packet], None],
        on_drop: Callable[[Packet, "EgressPort"], None],
        utilization_bin_ns: int,
    ) -> None:
        self.engine = engine
        self.link = link
        self.queues = queues
        self._deliver = deliver
        self._on_drop = on_drop
        self.meter = UtilizationMeter(link.rate_bps, utilization_bin_ns)
        self.busy = False
        self.dequeue_listeners: list[Callable[[], None]] = []
        self.transmit_listeners: list[Callable[[Packet, int], None]] = []

    @property
    def name(self) -> str:
        return self.link.name

    def send(self, packet: Packet) -> Admission:
        admission = self.queues.enqueue(packet, self.engine.now)
        if admission is Admission.DROPPED:
            self._on_drop(packet, self)
            return admission
        if not self.busy:
            self._start_next()
        return admission

    def transmit(self, packet: Packet) -> Event:
        """Put `packet` on the idle wire and return its delivery event."""

        now = self.engine.now
        self.busy = True
        wire_ns = self.link.serialization_ns(packet.size)
        self.meter.record(now, packet.size)
        for listener in self.transmit_listeners:
            listener(packet, now)
        self.engine.schedule(now + wire_ns, self._transmission_done)
        return self.engine.schedule(now + wire_ns + self.link.propagation_ns, partial(self._deliver, packet))

    def _start_next(self) -> None:
        packet = self.queues.dequeue()
        if packet is None:
            self.busy = False
            return
        self.transmit(packet)
        for listener in self.dequeue_listeners:
            listener()

    def _transmission_done(self) -> None:
        self.busy = False
        self._start_next()


class Host:
    """End host: NIC queue set plus dispatch of arriving packets.

    Senders register with `wake` when they may have something to send; the
    host pulls one packet at a time from each ready sender, round robin within
    a class and classes in index order, while the class holds fewer than
    `pull_depth` packets and the driver queue has room. Control packets and
    paced data are pushed and may be dropped when the driver queue is full.
    """

    def __init__(self, engine: Engine, node_id: int, num_classes: int, pull_depth: int) -> None:
        self.engine = engine
        self.node_id = node_id
        self.pull_depth = pull_depth
        self.uplink: Optional[EgressPort] = None
        self.senders: dict[int, SenderPort] = {}
        self.receivers: dict[int, ReceiverPort] = {}
        self.probe_channels: dict[int, ProbeChannelPort] = {}
        self.stray_packets = 0
        self._ready: list[deque[SenderPort]] = [deque() for _ in range(num_classes)]
        self._ready_ids: set[int] = set()
        self._kicking = False
        self._dirty = False

    def attach_uplink(self, port: EgressPort) -> None:
        self.uplink = port
        port.dequeue_listeners.append(self.kick)

    def wake(self, sender: SenderPort) -> None:
        if sender.flow_id not in self._ready_ids:
            self._ready_ids.add(sender.flow_id)
            self._ready[sender.priority_class].append(sender)
        self.kick()

    def push(self, packet: Packet) -> Admission:
        return self.uplink.send(packet)

    def kick(self) -> None:
        if self._kicking:
            self._dirty = True
            return
        self._kicking = True
        try:
            self._dirty = True
            while self._dirty:
                self._dirty = False
                self._pull_ready_senders()
        finally:
            self._kicking = False

    def _pull_ready_senders(self) -> None:
        queues = self.uplink.queues
        limit = queues.packet_limit
        now = self.engine.now
        for cls, ready in enumerate(self._ready):
            while ready and queues.class_packets(cls) < self.pull_depth:
                if limit is not None and queues.total_packets >= limit:
                    return
                sender = ready.popleft()
                self._ready_ids.discard(sender.flow_id)
                packet = sender.next_packet(now)
                if packet is None:
                    continue
                self.uplink.send(packet)
                self._ready_ids.add(sender.flow_id)
                ready.append(sender)

    def receive(self, packet: Packet) -> None:
        now = self.engine.now
        kind = packet.kind
        if kind is PacketKind.DATA:
            receiver = self.receivers.get(packet.flow_id)
            if receiver is None:
                self.stray_packets += 1
                return
            ack = receiver.on_data(packet, now)
            if ack is not None:
                self.push(ack)
        elif kind is PacketKind.ACK:
            sender = self.senders.get(packet.flow_id)
            if sender is None:
                self.stray_packets += 1
                return
            sender.on_ack(packet, now)
        elif kind is PacketKind.PROBE:
            self.push(make_echo(packet, now))
        else:
            channel = self.probe_channels.get(packet.src)
            if channel is not None:
                channel.on_echo(packet)


def make_echo(probe: Packet, now: int) -> Packet:
    """Reflect a probe's mark back to its sender at high priority."""

    return Packet(
        flow_id=probe.flow_id,
        start=0,
        end=0,
        size=CONTROL_PACKET_BYTES,
        priority_class=0,
        src=probe.dst,
        dst=probe.src,
        kind=PacketKind.ECHO,
        ecn_marked=probe.ecn_marked,
        sent_at=now,
        echo_sent_at=probe.sent_at,
        probe_seq=probe.probe_seq,
    )


class Switch:
    """Output-queued switch with zero forwarding latency."""

    def __init__(self) -> None:
        self.ports: dict[int, EgressPort] = {}

    def receive(self, packet: Packet) -> None:
        self.ports[packet.dst].send(packet)


class Network:
    """Star topology: every host hangs off one switch."""

    def __init__(
        self,
        engine: Engine,
        topology: TopologyConfig,
        fabric: FabricConfig,
        on_data_drop: Callable[[Packet], None],
        probe_threshold: Optional[int] = None,
    ) -> None:
        self.engine = engine
        self.topology = topology
        self.fabric = fabric
        self._on_data_drop = on_data_drop
        classes = fabric.num_classes
        self.drops_by_class = [0] * classes
        self.control_drops = 0
        self.host_drops = 0
        self.switch = Switch()
        self.hosts: list[Host] = []
        self.uplinks: dict[int, EgressPort] = {}
        self.downlinks: dict[int, EgressPort] = {}
        thresholds = fabric.ecn_thresholds()
        if probe_threshold is None:
            probe_threshold = thresholds[0]
        shared = fabric.buffer.port_total_bytes if fabric.switch_scheduler == "fifo" else None
        prop = topology.propagation_ns
        rate = topology.link_rate_bps
        for node in range(topology.nodes):
            host = Host(engine, node, classes, fabric.host_pull_depth_packets)
            host_queues = PortQueueSet(
                name=f"host{node}->switch",
                capacities=[None] * classes,
                scheduler=make_scheduler(fabric.host_scheduler, fabric.weights),
                packet_limit=fabric.driver_queue_packets,
            )
            uplink = EgressPort(
                engine,
                Link(host_queues.name, rate, prop),
                host_queues,
                deliver=self.switch.receive,
                on_drop=self._dropped,
                utilization_bin_ns=fabric.utilization_bin_ns,
            )
            host.attach_uplink(uplink)
            switch_queues = PortQueueSet(
                name=f"switch->host{node}",
                capacities=list(fabric.buffer.class_bytes),
                scheduler=make_scheduler(fabric.switch_scheduler, fabric.weights),
                ecn_thresholds=thresholds,
                probe_threshold=probe_threshold,
                shared_capacity=shared,
            )
            downlink = EgressPort(
                engine,
                Link(switch_queues.name, rate, prop),
                switch_queues,
                deliver=host.receive,
                on_drop=self._dropped,
                utilization_bin_ns=fabric.utilization_bin_ns,
            )
            self.switch.ports[node] = downlink
            self.hosts.append(host)
            self.uplinks[node] = uplink
            self.downlinks[node] = downlink
        LOGGER.debug("Built star topology with %s hosts at %s bps", topology.nodes, rate)

    def path(self, src: int, dst: int) -> tuple[EgressPort, EgressPort]:
        return self.uplinks[src], self.downlinks[dst]

    def ports(self) -> list[EgressPort]:
        return [*self.uplinks.values(), *self.downlinks.values()]

    def busiest_downlink(self) -> EgressPort:
        busiest = self.downlinks[0]
        for port in self.downlinks.values():
            if port.meter.total_bytes > busiest.meter.total_bytes:
                busiest = port
        return busiest

    def total_drops(self) -> int:
        return sum(self.drops_by_class) + self.control_drops

    def _dropped(self, packet: Packet, port: EgressPort) -> None:
        if port is self.uplinks.get(packet.src):
            self.host_drops += 1
        if packet.kind is PacketKind.DATA:
            self.drops_by_class[packet.priority_class] += 1
            self._on_data_drop(packet)
        else:
            self.control_drops += 1
