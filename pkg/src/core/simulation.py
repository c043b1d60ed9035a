"""One simulation run, from flow trace to run summary.

This module is I/O-agnostic. It wires the engine, fabric, transports and
metrics together for a single (scenario, seed, trace) and hands back a
`RunSummary`; writing files is the runner's job.
"""

from __future__ import annotations

import logging
from functools import partial
from typing import Optional, Sequence, Union

from core.config import ScenarioConfig, TransportConfig, ensure_valid
from core.cqcn import ProbeChannel, TcpPlusSender
from core.delay_cc import LedbatSender, TcpLpSender
from core.engine import Engine
from core.fabric import Host, Network
from core.ledger import GlobalLossLedger
from core.metrics import MetricsCollector, RunSummary, UtilizationRow, trace_digest
from core.models import FlowSpec, Packet
from core.nearopt import NearOptCoordinator, NearOptSender
from core.tcp import SenderEnvironment, TcpReceiver, TcpSender

LOGGER = logging.getLogger(__name__)

Sender = Union[TcpSender, NearOptSender]


def transport_label(transport: TransportConfig) -> str:
    """Short name used in file names and tables, e.g. `cubic-sack` or `nearopt`."""

    if transport.variant == "tcp":
        return transport.tcp.algorithm + ("-sack" if transport.tcp.sack_enabled else "")
    if transport.variant == "tcp+":
        return "tcpplus"
    return transport.variant


class Simulation:
    """Orchestrates one deterministic run over a pre-generated trace."""

    def __init__(self, config: ScenarioConfig, seed: int, trace: Sequence[FlowSpec]) -> None:
        self.config = ensure_valid(config)
        self.seed = seed
        self.trace = list(trace)
        self.engine = Engine()
        self.ledger = GlobalLossLedger()
        self.metrics = MetricsCollector()
        self.network = Network(
            self.engine,
            config.topology,
            config.fabric,
            on_data_drop=self._on_data_drop,
            probe_threshold=self._probe_threshold(),
        )
        self.coordinator: Optional[NearOptCoordinator] = None
        nearopt = [t for t in config.transports if t.variant == "nearopt"]
        if nearopt:
            self.coordinator = NearOptCoordinator(
                self.engine, config.fabric.num_classes, nearopt[0].nearopt.round_ns
            )
            self.coordinator.attach(self.network.ports())
        self.senders: dict[int, Sender] = {}
        self.receivers: dict[int, TcpReceiver] = {}
        self.channels: dict[tuple[int, int], ProbeChannel] = {}
        self._specs = {spec.flow_id: spec for spec in self.trace}

    @property
    def end_time(self) -> int:
        return self.config.run.duration_ns + self.config.run.drain_ns

    def run(self) -> RunSummary:
        for spec in self.trace:
            self.metrics.register(spec)
            self.engine.schedule(spec.arrival_time, partial(self._start_flow, spec))
        LOGGER.info(
            "Running %s with %s flows until %sns", self.config.name, len(self.trace), self.end_time
        )
        self.engine.run_until(self.end_time)
        summary = self._summary()
        LOGGER.info(
            "Run finished: %s flows completed, %s censored, %s drops, %s events",
            len(self.metrics.records),
            len(self.metrics.censored),
            summary.drops,
            summary.events,
        )
        return summary

    def _probe_threshold(self) -> Optional[int]:
        for transport in self.config.transports:
            if transport.variant == "tcp+" and transport.cqcn.mark_threshold_bytes is not None:
                return transport.cqcn.mark_threshold_bytes
        return None

    def _on_data_drop(self, packet: Packet) -> None:
        self.ledger.record_drop(packet.flow_id, packet.start, packet.end)

    def _start_flow(self, spec: FlowSpec) -> None:
        transport = self.config.transports[spec.priority_class]
        source = self.network.hosts[spec.src]
        destination = self.network.hosts[spec.dst]
        receiver = TcpReceiver(spec, sack_enabled=transport.tcp.sack_enabled or transport.variant == "nearopt")
        destination.receivers[spec.flow_id] = receiver
        self.receivers[spec.flow_id] = receiver
        env = SenderEnvironment(
            engine=self.engine,
            ledger=self.ledger,
            wake=source.wake,
            push=source.push,
            finished=self._finished,
        )
        sender = self._make_sender(spec, transport, env, receiver, destination)
        source.senders[spec.flow_id] = sender
        self.senders[spec.flow_id] = sender
        if isinstance(sender, TcpPlusSender):
            self._channel(spec.src, spec.dst, transport).attach(sender)
        sender.start(self.engine.now)

    def _make_sender(
        self,
        spec: FlowSpec,
        transport: TransportConfig,
        env: SenderEnvironment,
        receiver: TcpReceiver,
        destination: Host,
    ) -> Sender:
        ecn = self.config.fabric.data_ecn_capable
        variant = transport.variant
        if variant == "tcp":
            return TcpSender(spec, transport.tcp, env, ecn)
        if variant == "ledbat":
            return LedbatSender(spec, transport.tcp, transport.ledbat, env, ecn)
        if variant == "tcplp":
            return TcpLpSender(spec, transport.tcp, transport.tcplp, env, ecn)
        if variant == "tcp+":
            return TcpPlusSender(spec, transport.tcp, env, ecn)
        assert self.coordinator is not None
        path = self.coordinator.path_trackers(self.network.path(spec.src, spec.dst))
        restate = partial(self._restate, receiver, destination)
        return NearOptSender(spec, transport.tcp, env, self.coordinator, path, request_status=restate)

    def _restate(self, receiver: TcpReceiver, destination: Host) -> None:
        destination.push(receiver.status_ack(self.engine.now))

    def _channel(self, src: int, dst: int, transport: TransportConfig) -> ProbeChannel:
        key = (src, dst)
        channel = self.channels.get(key)
        if channel is None:
            interval = transport.cqcn.probe_interval_ns or self.config.topology.base_rtt_ns
            channel = ProbeChannel(
                self.engine,
                self.network.hosts[src].push,
                channel_id=-(len(self.channels) + 1),
                src=src,
                dst=dst,
                interval_ns=interval,
                probe_bytes=transport.cqcn.probe_bytes,
            )
            self.network.hosts[src].probe_channels[dst] = channel
            self.channels[key] = channel
        return channel

    def _finished(self, sender: Sender, now: int) -> None:
        spec = self._specs[sender.flow_id]
        self.metrics.record_completion(spec, now, sender.counters())
        if isinstance(sender, TcpPlusSender):
            self.channels[(spec.src, spec.dst)].detach(sender)

    def _summary(self) -> RunSummary:
        config = self.config
        selected = config.low_priority_class
        records = tuple(sorted(self.metrics.records.values(), key=lambda record: record.flow_id))
        censored = tuple(spec.flow_id for spec in self.metrics.censored if spec.priority_class == selected)
        if censored:
            LOGGER.warning("%s low-priority flows did not complete before %sns", len(censored), self.end_time)
        busiest = self.network.busiest_downlink()
        utilization = tuple(
            UtilizationRow(start, sent, share) for start, sent, share in busiest.meter.timeline(self.end_time)
        )
        faults = sum(sender.protocol_faults for sender in self.senders.values())
        return RunSummary(
            scenario=config.name,
            transport=transport_label(config.transports[selected]),
            seed=self.seed,
            selected_class=selected,
            records=records,
            censored=censored,
            trace_digest=trace_digest(self.trace),
            drops=self.network.total_drops(),
            ledger_drops=self.ledger.total_drops(),
            events=self.engine.processed,
            protocol_faults=faults,
            busiest_link=busiest.name,
            utilization=utilization,
        )


def simulate(config: ScenarioConfig, seed: int, trace: Sequence[FlowSpec]) -> RunSummary:
    return Simulation(config, seed, trace).run()
