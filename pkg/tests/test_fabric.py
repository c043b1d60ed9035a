from __future__ import annotations

import numpy as np
import pytest

from core.config import FabricConfig, TopologyConfig
from core.engine import Engine
from core.fabric import (
    DeficitRoundRobinScheduler,
    EgressPort,
    FifoScheduler,
    Host,
    Link,
    Network,
    PortQueueSet,
    StrictPriorityScheduler,
    UnknownClassError,
    UtilizationMeter,
)
from core.models import Admission, Packet, PacketKind
from core.units import GBPS, MTU_BYTES


def _make_packet(cls: int, size: int = MTU_BYTES, flow_id: int = 1, start: int = 0, **kwargs) -> Packet:
    return Packet(
        flow_id=flow_id,
        start=start,
        end=start + size - 40,
        size=size,
        priority_class=cls,
        src=1,
        dst=2,
        **kwargs,
    )


def _make_queues(scheduler, capacities=(None, None), **kwargs) -> PortQueueSet:
    return PortQueueSet("test-port", list(capacities), scheduler, **kwargs)


def test_strict_priority_never_serves_low_class_while_high_waits() -> None:
    steps = 1_000_000
    rng = np.random.default_rng(2024)
    arrivals = rng.random(steps) < 0.55
    classes = rng.integers(0, 3, steps)
    queues = _make_queues(StrictPriorityScheduler(), capacities=(None, None, None))

    for arrives, cls in zip(arrivals.tolist(), classes.tolist()):
        if arrives:
            queues.enqueue(_make_packet(cls), 0)
            continue
        waiting = [queues.class_packets(c) for c in range(3)]
        packet = queues.dequeue()
        if packet is None:
            assert sum(waiting) == 0
            continue
        assert all(waiting[c] == 0 for c in range(packet.priority_class))

    assert queues.is_conserved()


def test_wfq_share_follows_weights_when_both_classes_backlogged() -> None:
    queues = _make_queues(DeficitRoundRobinScheduler([99, 1]))
    for cls in (0, 1):
        for _ in range(200):
            queues.enqueue(_make_packet(cls), 0)

    served = [0, 0]
    for _ in range(10_000):
        packet = queues.dequeue()
        served[packet.priority_class] += packet.size
        queues.enqueue(_make_packet(packet.priority_class), 0)

    low_share = served[1] / sum(served)
    assert abs(low_share - 0.01) <= 0.002


def test_wfq_is_work_conserving_with_one_class() -> None:
    queues = _make_queues(DeficitRoundRobinScheduler([99, 1]))
    for _ in range(3):
        queues.enqueue(_make_packet(1), 0)

    served = [queues.dequeue() for _ in range(3)]

    assert all(packet is not None and packet.priority_class == 1 for packet in served)
    assert queues.dequeue() is None


def test_fifo_serves_in_arrival_order_across_classes() -> None:
    queues = _make_queues(FifoScheduler())
    queues.enqueue(_make_packet(1, flow_id=10), 0)
    queues.enqueue(_make_packet(0, flow_id=20), 0)
    queues.enqueue(_make_packet(1, flow_id=30), 0)

    order = [queues.dequeue().flow_id for _ in range(3)]

    assert order == [10, 20, 30]


def test_drop_tail_rejects_when_class_allocation_is_full() -> None:
    queues = _make_queues(StrictPriorityScheduler(), capacities=(3_000, 1_500))

    assert queues.enqueue(_make_packet(1), 0) is Admission.ACCEPTED
    assert queues.enqueue(_make_packet(1), 0) is Admission.DROPPED
    # A full low class does not borrow from the high class and vice versa.
    assert queues.enqueue(_make_packet(0), 0) is Admission.ACCEPTED
    assert queues.enqueue(_make_packet(0), 0) is Admission.ACCEPTED
    assert queues.enqueue(_make_packet(0), 0) is Admission.DROPPED
    assert queues.dropped_packets == [1, 1]
    assert queues.is_conserved()


def test_shared_capacity_pools_all_classes() -> None:
    queues = _make_queues(FifoScheduler(), capacities=(1_500, 1_500), shared_capacity=4_500)

    admissions = [queues.enqueue(_make_packet(1), 0) for _ in range(4)]

    assert admissions == [Admission.ACCEPTED] * 3 + [Admission.DROPPED]


def test_enqueue_of_unconfigured_class_raises() -> None:
    queues = _make_queues(StrictPriorityScheduler())

    with pytest.raises(UnknownClassError):
        queues.enqueue(_make_packet(5), 0)


def test_ecn_marks_capable_packets_above_threshold() -> None:
    queues = _make_queues(StrictPriorityScheduler(), ecn_thresholds=(3_000, 3_000))
    first = _make_packet(0, ecn_capable=True)
    second = _make_packet(0, ecn_capable=True)
    third = _make_packet(0, ecn_capable=True)
    blind = _make_packet(0)

    for packet in (first, second, third, blind):
        queues.enqueue(packet, 0)

    assert [first.ecn_marked, second.ecn_marked, third.ecn_marked] == [False, False, True]
    assert blind.ecn_marked is False


def test_probe_is_marked_by_high_priority_backlog() -> None:
    queues = _make_queues(StrictPriorityScheduler(), probe_threshold=3_000)
    probe = _make_packet(0, size=64, kind=PacketKind.PROBE, ecn_capable=True)
    queues.enqueue(probe, 0)
    assert probe.ecn_marked is False

    queues.enqueue(_make_packet(0), 0)
    queues.enqueue(_make_packet(0), 0)
    later = _make_packet(0, size=64, kind=PacketKind.PROBE, ecn_capable=True)
    queues.enqueue(later, 0)

    assert later.ecn_marked is True


def test_egress_port_serializes_back_to_back() -> None:
    engine = Engine()
    delivered: list[tuple[int, int]] = []
    link = Link("a->b", GBPS, 1_000)
    port = EgressPort(
        engine,
        link,
        _make_queues(StrictPriorityScheduler()),
        deliver=lambda packet: delivered.append((packet.flow_id, engine.now)),
        on_drop=lambda packet, egress: None,
        utilization_bin_ns=1_000_000,
    )

    port.send(_make_packet(0, flow_id=1))
    port.send(_make_packet(0, flow_id=2))
    engine.run_until(1_000_000)

    # 1500B at 1Gbps is 12us on the wire.
    assert delivered == [(1, 13_000), (2, 25_000)]
    assert port.meter.total_bytes == 3_000


def test_utilization_timeline_bins_bytes() -> None:
    meter = UtilizationMeter(GBPS, 1_000)
    meter.record(0, 125)
    meter.record(2_500, 25)

    rows = meter.timeline(until_ns=4_000)

    assert rows == [(0, 125, 1.0), (1_000, 0, 0.0), (2_000, 25, 0.2), (3_000, 0, 0.0)]


def test_network_reports_switch_drops_per_class() -> None:
    engine = Engine()
    dropped: list[Packet] = []
    fabric = FabricConfig()
    network = Network(engine, TopologyConfig(nodes=3, link_rate_bps=GBPS), fabric, dropped.append)
    downlink = network.downlinks[2]
    capacity = fabric.buffer.class_bytes[1]

    # Keep the wire busy so the queue fills.
    sent = 0
    while sent <= capacity + 2 * MTU_BYTES:
        downlink.send(_make_packet(1, start=sent))
        sent += MTU_BYTES

    assert network.drops_by_class[1] >= 1
    assert len(dropped) == network.drops_by_class[1]
    assert downlink.queues.is_conserved()
    assert network.path(1, 2) == (network.uplinks[1], network.downlinks[2])


class FakeSender:
    def __init__(self, flow_id: int, cls: int, count: int) -> None:
        self.flow_id = flow_id
        self.priority_class = cls
        self.remaining = count

    def next_packet(self, now: int):
        if self.remaining == 0:
            return None
        self.remaining -= 1
        return _make_packet(self.priority_class, flow_id=self.flow_id)

    def on_ack(self, ack: Packet, now: int) -> None:
        pass


def _make_host_network() -> Network:
    return Network(Engine(), TopologyConfig(nodes=2, link_rate_bps=GBPS), FabricConfig(), lambda packet: None)


def test_driver_queue_drops_the_packet_after_a_hundred_waiting() -> None:
    network = _make_host_network()
    host = network.hosts[1]

    # The first packet goes straight onto the wire.
    admissions = [host.push(_make_packet(1, start=i * MTU_BYTES)) for i in range(101)]
    assert admissions == [Admission.ACCEPTED] * 101
    assert network.uplinks[1].queues.total_packets == 100

    assert host.push(_make_packet(0)) is Admission.DROPPED
    assert network.host_drops == 1


def test_host_puts_high_priority_into_the_driver_queue_first() -> None:
    engine = Engine()
    delivered: list[int] = []
    queues = PortQueueSet("host1->switch", [None, None], StrictPriorityScheduler(), packet_limit=100)
    port = EgressPort(
        engine,
        Link("host1->switch", GBPS, 0),
        queues,
        deliver=lambda packet: delivered.append(packet.priority_class),
        on_drop=lambda packet, egress: None,
        utilization_bin_ns=1_000_000,
    )
    host = Host(engine, 1, 2, pull_depth=16)
    host.attach_uplink(port)

    host.push(_make_packet(1, flow_id=9))
    host.wake(FakeSender(2, 1, 3))
    host.wake(FakeSender(1, 0, 3))
    engine.run_until(1_000_000)

    assert delivered == [1, 0, 0, 0, 1, 1, 1]
