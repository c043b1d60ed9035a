"""Flow trace generators.

Every generator is a pure function of (scenario, seed): arrivals, sizes and
endpoints come from separate named random streams, and the result is sorted
by arrival time with dense flow ids, so a trace can be generated once and
replayed under different transports.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from core.config import ConfigError, ScenarioConfig, SizeConfig, TopologyConfig, WorkloadConfig
from core.engine import RngStream, RngStreams
from core.models import FlowSpec
from core.units import NS_PER_S

LOGGER = logging.getLogger(__name__)


def load_to_rate(load_fraction: float, mean_size: float, capacity_bps: float) -> float:
    """Poisson arrival rate (flows/s) that offers `load_fraction` of `capacity_bps`."""

    if load_fraction < 0 or load_fraction >= 1:
        raise ConfigError([f"load must be in [0, 1), got {load_fraction}"])
    if mean_size <= 0 or capacity_bps <= 0:
        raise ConfigError(["mean flow size and capacity must be > 0"])
    return load_fraction * capacity_bps / (mean_size * 8)


@dataclass(frozen=True)
class UniformSize:
    mean: int

    @property
    def mean_bytes(self) -> float:
        return (1 + 2 * self.mean) / 2


@dataclass(frozen=True)
class FixedSize:
    size: int

    @property
    def mean_bytes(self) -> float:
        return float(self.size)


@dataclass(frozen=True)
class EmpiricalCdf:
    """Piecewise-linear CDF over (size, cumulative probability) points."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        problems = validate_cdf_points(self.points)
        if problems:
            raise ConfigError(problems)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([size for size, _ in self.points], dtype=float)

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([prob for _, prob in self.points], dtype=float)

    @property
    def mean_bytes(self) -> float:
        sizes = self.sizes
        probs = self.probabilities
        # Mass below the first point sits at the first size.
        mean = probs[0] * sizes[0]
        mean += float(np.sum(np.diff(probs) * (sizes[1:] + sizes[:-1]) / 2))
        return float(mean)

    def quantile(self, u: float) -> float:
        return float(np.interp(u, self.probabilities, self.sizes))


SizeDistribution = Union[UniformSize, FixedSize, EmpiricalCdf]


def validate_cdf_points(points: Sequence[tuple[float, float]]) -> list[str]:
    problems = []
    if len(points) < 1:
        return ["empirical CDF needs at least one point"]
    sizes = [size for size, _ in points]
    probs = [prob for _, prob in points]
    if any(size <= 0 for size in sizes):
        problems.append("empirical CDF sizes must be > 0")
    if any(b < a for a, b in zip(sizes, sizes[1:])):
        problems.append("empirical CDF sizes must be non-decreasing")
    if any(b <= a for a, b in zip(probs, probs[1:])):
        problems.append("empirical CDF probabilities must be strictly increasing")
    if probs[0] < 0:
        problems.append("empirical CDF probabilities must be >= 0")
    if abs(probs[-1] - 1.0) > 1e-9:
        problems.append(f"empirical CDF must end at probability 1.0, got {probs[-1]}")
    return problems


def make_size_distribution(
    config: SizeConfig,
    cdf_points: Optional[Sequence[tuple[float, float]]] = None,
) -> SizeDistribution:
    if config.kind == "uniform":
        return UniformSize(config.mean_bytes)
    if config.kind == "fixed":
        return FixedSize(config.size_bytes)
    if config.kind == "cdf":
        if cdf_points is None:
            raise ConfigError([f"workload.sizes.cdf_path {config.cdf_path!r} was not loaded"])
        return EmpiricalCdf(tuple((float(s), float(p)) for s, p in cdf_points))
    raise ConfigError([f"workload.sizes.kind must be one of uniform, fixed, cdf, got {config.kind!r}"])


def sample_size(dist: SizeDistribution, rng: RngStream) -> int:
    if isinstance(dist, FixedSize):
        return dist.size
    if isinstance(dist, UniformSize):
        return rng.integer(1, 2 * dist.mean)
    return max(1, int(round(dist.quantile(rng.draw("uniform")))))


@dataclass(frozen=True)
class _Draft:
    arrival_time: int
    order: int
    src: int
    dst: int
    size: int
    priority_class: int
    twin_of: Optional[int] = None


def _poisson_arrivals(rng: RngStream, rate: float, duration_ns: int) -> list[int]:
    arrivals: list[int] = []
    if rate <= 0:
        return arrivals
    elapsed_s = 0.0
    while True:
        elapsed_s += rng.draw("exponential", rate)
        arrival = int(elapsed_s * NS_PER_S)
        if arrival >= duration_ns:
            return arrivals
        arrivals.append(arrival)


def _others(nodes: int, excluded: Sequence[int]) -> list[int]:
    return [node for node in range(nodes) if node not in excluded]


def gen_das(
    workload: WorkloadConfig,
    topology: TopologyConfig,
    duration_ns: int,
    sizes: SizeDistribution,
    streams: RngStreams,
) -> list[FlowSpec]:
    """Duplicate-aware scheduling: every request is served twice.

    The client sends each request to two different servers, the primary copy
    at class 0 and its twin at class 1, so the client's uplink is shared.
    """

    client = workload.client_node
    servers = _others(topology.nodes, [client])
    if len(servers) < 2:
        raise ConfigError(["das needs at least two servers besides the client"])
    rate = load_to_rate(workload.load, sizes.mean_bytes, topology.link_rate_bps)
    arrivals = _poisson_arrivals(streams.stream("arrivals"), rate, duration_ns)
    size_rng = streams.stream("sizes")
    endpoint_rng = streams.stream("endpoints")
    drafts: list[_Draft] = []
    for arrival in arrivals:
        size = sample_size(sizes, size_rng)
        primary = endpoint_rng.pick(servers)
        twin = endpoint_rng.pick([server for server in servers if server != primary])
        order = len(drafts)
        drafts.append(_Draft(arrival, order, client, primary, size, 0))
        drafts.append(_Draft(arrival, order + 1, client, twin, size, 1, twin_of=order))
    return _finalize(drafts)


def gen_sjf(
    workload: WorkloadConfig,
    topology: TopologyConfig,
    duration_ns: int,
    sizes: SizeDistribution,
    streams: RngStreams,
) -> list[FlowSpec]:
    """Size-aware prioritization: flows of at least `long_flow_bytes` go low."""

    capacity = topology.nodes * topology.link_rate_bps
    rate = load_to_rate(workload.load, sizes.mean_bytes, capacity)
    arrivals = _poisson_arrivals(streams.stream("arrivals"), rate, duration_ns)
    size_rng = streams.stream("sizes")
    endpoint_rng = streams.stream("endpoints")
    nodes = list(range(topology.nodes))
    drafts: list[_Draft] = []
    for arrival in arrivals:
        size = sample_size(sizes, size_rng)
        src = endpoint_rng.pick(nodes)
        dst = endpoint_rng.pick([node for node in nodes if node != src])
        priority = 1 if size >= workload.long_flow_bytes else 0
        drafts.append(_Draft(arrival, len(drafts), src, dst, size, priority))
    return _finalize(drafts)


def onoff_period_ns(workload: WorkloadConfig, topology: TopologyConfig) -> int:
    if not 0 < workload.hp_load <= 1:
        raise ConfigError([f"workload.hp_load must be in (0, 1], got {workload.hp_load}"])
    burst_bits = workload.workers * workload.update_bytes * 8
    return round(burst_bits * NS_PER_S / (workload.hp_load * topology.link_rate_bps))


def gen_onoff(
    workload: WorkloadConfig,
    topology: TopologyConfig,
    duration_ns: int,
    sizes: SizeDistribution,
    streams: RngStreams,
) -> list[FlowSpec]:
    """Periodic worker-to-parameter-server incast plus background storage flows."""

    if workload.workers < 2:
        raise ConfigError(["workload.workers must be >= 2"])
    server = workload.parameter_server
    workers = _others(topology.nodes, [server])[: workload.workers]
    if len(workers) < workload.workers:
        raise ConfigError(["topology.nodes must exceed workload.workers for onoff"])
    period = onoff_period_ns(workload, topology)
    drafts: list[_Draft] = []
    burst_at = 0
    while burst_at < duration_ns:
        for worker in workers:
            drafts.append(_Draft(burst_at, len(drafts), worker, server, workload.update_bytes, 0))
        burst_at += period
    storage = _others(topology.nodes, [server, *workers]) or _others(topology.nodes, [server])
    rate = load_to_rate(workload.lp_load, sizes.mean_bytes, topology.link_rate_bps)
    size_rng = streams.stream("sizes")
    endpoint_rng = streams.stream("endpoints")
    for arrival in _poisson_arrivals(streams.stream("arrivals"), rate, duration_ns):
        size = sample_size(sizes, size_rng)
        drafts.append(_Draft(arrival, len(drafts), endpoint_rng.pick(storage), server, size, 1))
    return _finalize(drafts)


def gen_hybrid(
    workload: WorkloadConfig,
    topology: TopologyConfig,
    duration_ns: int,
    sizes: SizeDistribution,
    streams: RngStreams,
) -> list[FlowSpec]:
    """One storage client fetching objects through two independent Poisson processes."""

    if workload.hp_load + workload.lp_load > workload.total_load + 1e-9:
        raise ConfigError(["workload.hp_load + workload.lp_load must not exceed workload.total_load"])
    client = workload.client_node
    servers = _others(topology.nodes, [client])
    size_rng = streams.stream("sizes")
    endpoint_rng = streams.stream("endpoints")
    drafts: list[_Draft] = []
    for priority, load in ((0, workload.hp_load), (1, workload.lp_load)):
        rate = load_to_rate(load, sizes.mean_bytes, topology.link_rate_bps)
        stream = streams.stream("arrivals.hp" if priority == 0 else "arrivals.lp")
        for arrival in _poisson_arrivals(stream, rate, duration_ns):
            size = sample_size(sizes, size_rng)
            drafts.append(_Draft(arrival, len(drafts), endpoint_rng.pick(servers), client, size, priority))
    return _finalize(drafts)


GENERATOR_FUNCTIONS = {
    "das": gen_das,
    "sjf": gen_sjf,
    "onoff": gen_onoff,
    "hybrid": gen_hybrid,
}


def generate_trace(
    scenario: ScenarioConfig,
    seed: int,
    sizes: Optional[SizeDistribution] = None,
) -> list[FlowSpec]:
    workload = scenario.workload
    generator = GENERATOR_FUNCTIONS.get(workload.generator)
    if generator is None:
        raise ConfigError([f"workload.generator {workload.generator!r} is not known"])
    if sizes is None:
        sizes = make_size_distribution(workload.sizes)
    trace = generator(workload, scenario.topology, scenario.run.duration_ns, sizes, RngStreams(seed))
    LOGGER.info("Generated %s flows (%s) for seed %s", len(trace), workload.generator, seed)
    return trace


def offered_load(trace: Sequence[FlowSpec], duration_ns: int, capacity_bps: float, priority_class: Optional[int] = None) -> float:
    """Offered bits over the trace window as a fraction of `capacity_bps`."""

    total = sum(flow.size for flow in trace if priority_class is None or flow.priority_class == priority_class)
    return total * 8 * NS_PER_S / (duration_ns * capacity_bps)


def _finalize(drafts: list[_Draft]) -> list[FlowSpec]:
    ordered = sorted(drafts, key=lambda draft: (draft.arrival_time, draft.order))
    ids = {draft.order: flow_id for flow_id, draft in enumerate(ordered)}
    return [
        FlowSpec(
            flow_id=ids[draft.order],
            src=draft.src,
            dst=draft.dst,
            size=draft.size,
            priority_class=draft.priority_class,
            arrival_time=draft.arrival_time,
            twin_of=ids[draft.twin_of] if draft.twin_of is not None else None,
        )
        for draft in ordered
    ]
