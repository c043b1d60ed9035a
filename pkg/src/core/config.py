"""Scenario configuration dataclasses.

File parsing lives in the adapters; these dataclasses define the shape the
simulator expects and `validate_scenario` lists everything wrong with one.
Every field has a default so a scenario file only states what it changes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from core.units import GBPS, KB, MAX_PRIORITY_CLASSES, MB, MTU_BYTES, NS_PER_MS, NS_PER_S, NS_PER_US

SCHEDULERS = ("strict", "wfq", "fifo")
TCP_ALGORITHMS = ("newreno", "cubic")
TRANSPORT_VARIANTS = ("tcp", "nearopt", "ledbat", "tcplp", "tcp+")
GENERATORS = ("das", "sjf", "onoff", "hybrid")
SIZE_KINDS = ("uniform", "fixed", "cdf")
SWEEP_MODES = ("run", "paired")


class ConfigError(ValueError):
    """Raised when a scenario, sweep or workload input is invalid.

    `violations` keeps one human-readable line per problem, each naming the
    offending field.
    """

    def __init__(self, violations: list[str]) -> None:
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class TopologyConfig:
    nodes: int = 40
    link_rate_bps: int = 10 * GBPS
    base_rtt_ns: int = 100 * NS_PER_US

    @property
    def propagation_ns(self) -> int:
        # A round trip crosses four links (host->switch->host and back).
        return self.base_rtt_ns // 4


@dataclass(frozen=True)
class BufferConfig:
    """Static per-port partition, one allocation per priority class."""

    port_total_bytes: int = 192 * KB
    class_bytes: tuple[int, ...] = (128 * KB, 64 * KB)


@dataclass(frozen=True)
class FabricConfig:
    switch_scheduler: str = "strict"
    host_scheduler: str = "strict"
    # Only read by the wfq scheduler; quantum is one MTU per weight unit.
    weights: tuple[int, ...] = (99, 1)
    buffer: BufferConfig = field(default_factory=BufferConfig)
    ecn_threshold_fraction: float = 0.3
    ecn_threshold_bytes: Optional[tuple[int, ...]] = None
    data_ecn_capable: bool = False
    driver_queue_packets: int = 100
    host_pull_depth_packets: int = 16
    utilization_bin_ns: int = NS_PER_MS

    @property
    def num_classes(self) -> int:
        return len(self.buffer.class_bytes)

    def ecn_thresholds(self) -> tuple[int, ...]:
        if self.ecn_threshold_bytes is not None:
            return tuple(self.ecn_threshold_bytes)
        if self.switch_scheduler == "fifo":
            shared = int(self.buffer.port_total_bytes * self.ecn_threshold_fraction)
            return tuple(shared for _ in self.buffer.class_bytes)
        return tuple(int(cap * self.ecn_threshold_fraction) for cap in self.buffer.class_bytes)


@dataclass(frozen=True)
class TcpConfig:
    algorithm: str = "cubic"
    sack_enabled: bool = True
    initial_window_packets: int = 2
    rto_min_ns: int = NS_PER_MS
    initial_rto_ns: int = 3 * NS_PER_MS
    max_rto_ns: int = NS_PER_S
    send_buffer_bytes: int = MB
    receive_buffer_bytes: int = MB
    dupack_threshold: int = 3
    cubic_c: float = 0.4
    cubic_beta: float = 0.7


@dataclass(frozen=True)
class LedbatConfig:
    target_ns: int = 3_200 * NS_PER_US
    gain: float = 1.0
    allowed_increase_packets: int = 1
    current_filter_samples: int = 4


@dataclass(frozen=True)
class TcpLpConfig:
    delta: float = 0.15


@dataclass(frozen=True)
class CqcnConfig:
    # None means "one base RTT" and "the fabric ECN threshold of class 0".
    probe_interval_ns: Optional[int] = None
    probe_bytes: int = 64
    mark_threshold_bytes: Optional[int] = None


@dataclass(frozen=True)
class NearOptConfig:
    # None means each link uses its own propagation delay as the round.
    round_ns: Optional[int] = None


@dataclass(frozen=True)
class TransportConfig:
    variant: str = "tcp"
    tcp: TcpConfig = field(default_factory=TcpConfig)
    ledbat: LedbatConfig = field(default_factory=LedbatConfig)
    tcplp: TcpLpConfig = field(default_factory=TcpLpConfig)
    cqcn: CqcnConfig = field(default_factory=CqcnConfig)
    nearopt: NearOptConfig = field(default_factory=NearOptConfig)


@dataclass(frozen=True)
class SizeConfig:
    kind: str = "uniform"
    mean_bytes: int = MB
    size_bytes: int = 128 * KB
    cdf_path: str = ""


@dataclass(frozen=True)
class WorkloadConfig:
    generator: str = "das"
    # das: offered load per class; sjf: aggregate load over all edge links.
    load: float = 0.3
    sizes: SizeConfig = field(default_factory=SizeConfig)
    client_node: int = 0
    parameter_server: int = 0
    workers: int = 8
    update_bytes: int = 500 * KB
    hp_load: float = 0.5
    lp_load: float = 0.3
    total_load: float = 0.8
    long_flow_bytes: int = MB


@dataclass(frozen=True)
class RunConfig:
    duration_ns: int = 100 * NS_PER_MS
    # Extra simulated time after the last arrival so in-flight flows can finish.
    drain_ns: int = 50 * NS_PER_MS
    seeds: tuple[int, ...] = (1, 2, 3)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "default"
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    fabric: FabricConfig = field(default_factory=FabricConfig)
    transports: tuple[TransportConfig, ...] = (
        TransportConfig(),
        TransportConfig(),
    )
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    run: RunConfig = field(default_factory=RunConfig)

    @property
    def low_priority_class(self) -> int:
        return self.fabric.num_classes - 1


@dataclass(frozen=True)
class SweepAxis:
    name: str
    # Each value is a mapping of dotted override keys to values.
    values: tuple[dict, ...]
    labels: tuple[str, ...]


@dataclass(frozen=True)
class SweepSpec:
    base: ScenarioConfig
    axes: tuple[SweepAxis, ...]
    mode: str = "run"
    seeds: tuple[int, ...] = (1,)
    candidate: Optional[str] = None


def validate_scenario(config: ScenarioConfig) -> list[str]:
    """Return every violation found in `config`; empty means valid."""

    violations: list[str] = []
    violations.extend(_validate_topology(config.topology))
    violations.extend(_validate_fabric(config.fabric))
    classes = config.fabric.num_classes
    if len(config.transports) != classes:
        violations.append(
            f"transports must list one entry per priority class ({classes}), got {len(config.transports)}"
        )
    for index, transport in enumerate(config.transports):
        violations.extend(_validate_transport(transport, f"transports.{index}"))
    violations.extend(_validate_workload(config.workload, config.topology, classes))
    violations.extend(_validate_run(config.run))
    return violations


def ensure_valid(config: ScenarioConfig) -> ScenarioConfig:
    violations = validate_scenario(config)
    if violations:
        raise ConfigError(violations)
    return config


def _validate_topology(topology: TopologyConfig) -> list[str]:
    problems = []
    if topology.nodes < 2:
        problems.append("topology.nodes must be >= 2")
    if topology.link_rate_bps <= 0:
        problems.append("topology.link_rate_bps must be > 0")
    if topology.base_rtt_ns < 4:
        problems.append("topology.base_rtt_ns must be >= 4 (one ns per link traversal)")
    return problems


def _validate_fabric(fabric: FabricConfig) -> list[str]:
    problems = []
    if fabric.switch_scheduler not in SCHEDULERS:
        problems.append(f"fabric.switch_scheduler must be one of {', '.join(SCHEDULERS)}")
    if fabric.host_scheduler not in SCHEDULERS:
        problems.append(f"fabric.host_scheduler must be one of {', '.join(SCHEDULERS)}")
    allocations = fabric.buffer.class_bytes
    if not 1 <= len(allocations) <= MAX_PRIORITY_CLASSES:
        problems.append(f"fabric.buffer.class_bytes must list 1..{MAX_PRIORITY_CLASSES} allocations")
    if any(size < MTU_BYTES for size in allocations):
        problems.append(f"fabric.buffer.class_bytes entries must be >= {MTU_BYTES}")
    if sum(allocations) > fabric.buffer.port_total_bytes:
        problems.append("fabric.buffer.class_bytes must sum to <= fabric.buffer.port_total_bytes")
    if len(fabric.weights) != len(allocations):
        problems.append("fabric.weights must list one weight per priority class")
    if any(weight <= 0 for weight in fabric.weights):
        problems.append("fabric.weights must be > 0")
    if not 0.0 < fabric.ecn_threshold_fraction <= 1.0:
        problems.append("fabric.ecn_threshold_fraction must be in (0, 1]")
    if fabric.ecn_threshold_bytes is not None and len(fabric.ecn_threshold_bytes) != len(allocations):
        problems.append("fabric.ecn_threshold_bytes must list one threshold per priority class")
    if fabric.driver_queue_packets < 1:
        problems.append("fabric.driver_queue_packets must be >= 1")
    if fabric.host_pull_depth_packets < 1:
        problems.append("fabric.host_pull_depth_packets must be >= 1")
    if fabric.utilization_bin_ns <= 0:
        problems.append("fabric.utilization_bin_ns must be > 0")
    return problems


def _validate_transport(transport: TransportConfig, prefix: str) -> list[str]:
    problems = []
    if transport.variant not in TRANSPORT_VARIANTS:
        problems.append(f"{prefix}.variant must be one of {', '.join(TRANSPORT_VARIANTS)}")
    tcp = transport.tcp
    if tcp.algorithm not in TCP_ALGORITHMS:
        problems.append(f"{prefix}.tcp.algorithm must be one of {', '.join(TCP_ALGORITHMS)}")
    if tcp.initial_window_packets < 1:
        problems.append(f"{prefix}.tcp.initial_window_packets must be >= 1")
    if tcp.rto_min_ns <= 0:
        problems.append(f"{prefix}.tcp.rto_min_ns must be > 0")
    if tcp.max_rto_ns < tcp.rto_min_ns:
        problems.append(f"{prefix}.tcp.max_rto_ns must be >= rto_min_ns")
    if tcp.initial_rto_ns <= 0:
        problems.append(f"{prefix}.tcp.initial_rto_ns must be > 0")
    if tcp.send_buffer_bytes < MTU_BYTES or tcp.receive_buffer_bytes < MTU_BYTES:
        problems.append(f"{prefix}.tcp send/receive buffers must be >= {MTU_BYTES}")
    if tcp.dupack_threshold < 1:
        problems.append(f"{prefix}.tcp.dupack_threshold must be >= 1")
    if tcp.cubic_c <= 0 or not 0.0 < tcp.cubic_beta < 1.0:
        problems.append(f"{prefix}.tcp cubic_c must be > 0 and cubic_beta in (0, 1)")
    if transport.ledbat.target_ns <= 0 or transport.ledbat.gain <= 0:
        problems.append(f"{prefix}.ledbat target_ns and gain must be > 0")
    if transport.ledbat.current_filter_samples < 1 or transport.ledbat.allowed_increase_packets < 1:
        problems.append(f"{prefix}.ledbat filter and allowed increase must be >= 1")
    if not 0.0 < transport.tcplp.delta < 1.0:
        problems.append(f"{prefix}.tcplp.delta must be in (0, 1)")
    cqcn = transport.cqcn
    if cqcn.probe_interval_ns is not None and cqcn.probe_interval_ns <= 0:
        problems.append(f"{prefix}.cqcn.probe_interval_ns must be > 0")
    if not 64 <= cqcn.probe_bytes <= MTU_BYTES:
        problems.append(f"{prefix}.cqcn.probe_bytes must be in [64, {MTU_BYTES}]")
    if cqcn.mark_threshold_bytes is not None and cqcn.mark_threshold_bytes < 0:
        problems.append(f"{prefix}.cqcn.mark_threshold_bytes must be >= 0")
    if transport.nearopt.round_ns is not None and transport.nearopt.round_ns <= 0:
        problems.append(f"{prefix}.nearopt.round_ns must be > 0")
    return problems


def _validate_workload(workload: WorkloadConfig, topology: TopologyConfig, classes: int) -> list[str]:
    problems = []
    if workload.generator not in GENERATORS:
        problems.append(f"workload.generator must be one of {', '.join(GENERATORS)}")
        return problems
    if classes < 2:
        problems.append("workload generators need at least 2 priority classes")
    sizes = workload.sizes
    if sizes.kind not in SIZE_KINDS:
        problems.append(f"workload.sizes.kind must be one of {', '.join(SIZE_KINDS)}")
    if sizes.kind == "uniform" and sizes.mean_bytes <= 0:
        problems.append("workload.sizes.mean_bytes must be > 0")
    if sizes.kind == "fixed" and sizes.size_bytes <= 0:
        problems.append("workload.sizes.size_bytes must be > 0")
    if sizes.kind == "cdf" and not sizes.cdf_path:
        problems.append("workload.sizes.cdf_path is required for kind=cdf")
    for name in ("load", "lp_load"):
        value = getattr(workload, name)
        if not 0.0 <= value < 1.0:
            problems.append(f"workload.{name} must be in [0, 1)")
    nodes = topology.nodes
    for name in ("client_node", "parameter_server"):
        value = getattr(workload, name)
        if not 0 <= value < max(nodes, 1):
            problems.append(f"workload.{name} must be a node id below topology.nodes")
    if workload.generator == "das" and nodes < 3:
        problems.append("topology.nodes must be >= 3 for das (two servers besides the client)")
    if workload.generator == "onoff":
        if workload.workers < 2:
            problems.append("workload.workers must be >= 2")
        if nodes < workload.workers + 1:
            problems.append("topology.nodes must exceed workload.workers for onoff")
        if not 0.0 < workload.hp_load <= 1.0:
            problems.append("workload.hp_load must be in (0, 1]")
        if workload.hp_load + workload.lp_load >= 1.0:
            problems.append("workload.hp_load + workload.lp_load must be < 1 for onoff")
        if workload.update_bytes <= 0:
            problems.append("workload.update_bytes must be > 0")
    if workload.generator == "hybrid":
        if not 0.0 <= workload.hp_load < 1.0:
            problems.append("workload.hp_load must be in [0, 1)")
        if workload.hp_load + workload.lp_load > workload.total_load + 1e-9:
            problems.append("workload.hp_load + workload.lp_load must not exceed workload.total_load")
    if workload.long_flow_bytes <= 0:
        problems.append("workload.long_flow_bytes must be > 0")
    return problems


def _validate_run(run: RunConfig) -> list[str]:
    problems = []
    if run.duration_ns <= 0:
        problems.append("run.duration_ns must be > 0")
    if run.drain_ns < 0:
        problems.append("run.drain_ns must be >= 0")
    if not run.seeds:
        problems.append("run.seeds must list at least one seed")
    if any(seed < 0 or seed >= 2**64 for seed in run.seeds):
        problems.append("run.seeds must be unsigned 64-bit integers")
    return problems
