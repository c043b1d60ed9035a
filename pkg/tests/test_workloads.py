from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from core.config import ConfigError, RunConfig, ScenarioConfig, SizeConfig, TopologyConfig, WorkloadConfig
from core.engine import RngStream
from core.units import GBPS, KB, MB, NS_PER_MS
from core.workloads import (
    EmpiricalCdf,
    FixedSize,
    UniformSize,
    generate_trace,
    load_to_rate,
    offered_load,
    onoff_period_ns,
    sample_size,
)


def _make_scenario(**workload) -> ScenarioConfig:
    return ScenarioConfig(
        name="wl",
        topology=TopologyConfig(nodes=10, link_rate_bps=GBPS),
        workload=replace(WorkloadConfig(), **workload),
        run=RunConfig(duration_ns=200 * NS_PER_MS, seeds=(1,)),
    )


def test_load_to_rate_matches_offered_bits() -> None:
    # 50% of 10Gbps with 1MB-ish mean flows.
    assert load_to_rate(0.5, 1_250_000, 10 * GBPS) == pytest.approx(500.0)


def test_load_to_rate_rejects_saturated_load() -> None:
    with pytest.raises(ConfigError):
        load_to_rate(1.0, 1_000, GBPS)
    with pytest.raises(ConfigError):
        load_to_rate(-0.1, 1_000, GBPS)


def test_same_seed_gives_identical_trace() -> None:
    scenario = _make_scenario(generator="sjf", load=0.5, sizes=SizeConfig(kind="uniform", mean_bytes=100 * KB))

    assert generate_trace(scenario, 4) == generate_trace(scenario, 4)
    assert generate_trace(scenario, 4) != generate_trace(scenario, 5)


def test_trace_is_sorted_with_dense_ids() -> None:
    scenario = _make_scenario(generator="sjf", load=0.5, sizes=SizeConfig(kind="uniform", mean_bytes=100 * KB))
    trace = generate_trace(scenario, 9)

    assert [flow.flow_id for flow in trace] == list(range(len(trace)))
    assert all(a.arrival_time <= b.arrival_time for a, b in zip(trace, trace[1:]))
    assert all(flow.src != flow.dst for flow in trace)


def test_sjf_routes_long_flows_to_low_priority() -> None:
    scenario = _make_scenario(
        generator="sjf",
        load=0.5,
        long_flow_bytes=MB,
        sizes=SizeConfig(kind="uniform", mean_bytes=MB),
    )
    trace = generate_trace(scenario, 2)

    assert trace
    for flow in trace:
        assert flow.priority_class == (1 if flow.size >= MB else 0)


def test_das_pairs_each_request_with_a_low_priority_twin() -> None:
    scenario = _make_scenario(generator="das", load=0.5, client_node=0, sizes=SizeConfig(kind="fixed", size_bytes=64 * KB))
    trace = generate_trace(scenario, 3)
    by_id = {flow.flow_id: flow for flow in trace}

    twins = [flow for flow in trace if flow.twin_of is not None]
    assert len(twins) * 2 == len(trace)
    for twin in twins:
        primary = by_id[twin.twin_of]
        assert twin.priority_class == 1 and primary.priority_class == 0
        assert twin.arrival_time == primary.arrival_time
        assert twin.size == primary.size
        assert twin.src == primary.src == 0
        assert twin.dst != primary.dst
        assert 0 not in (twin.dst, primary.dst)


def test_das_offered_load_per_class_is_near_target() -> None:
    scenario = replace(
        _make_scenario(generator="das", load=0.4, sizes=SizeConfig(kind="fixed", size_bytes=50 * KB)),
        run=RunConfig(duration_ns=2_000 * NS_PER_MS, seeds=(1,)),
    )
    trace = generate_trace(scenario, 1)

    load = offered_load(trace, scenario.run.duration_ns, GBPS, priority_class=0)
    assert load == pytest.approx(0.4, rel=0.1)


def test_onoff_period_for_default_update_size() -> None:
    workload = WorkloadConfig(workers=8, update_bytes=500_000, hp_load=0.5)

    assert onoff_period_ns(workload, TopologyConfig(link_rate_bps=10 * GBPS)) == 6_400_000


def test_onoff_bursts_are_periodic_incasts_to_the_server() -> None:
    scenario = _make_scenario(
        generator="onoff",
        workers=8,
        parameter_server=0,
        update_bytes=500_000,
        hp_load=0.5,
        lp_load=0.2,
        sizes=SizeConfig(kind="fixed", size_bytes=256 * KB),
    )
    trace = generate_trace(scenario, 1)
    period = onoff_period_ns(scenario.workload, scenario.topology)

    high = [flow for flow in trace if flow.priority_class == 0]
    low = [flow for flow in trace if flow.priority_class == 1]
    assert {flow.arrival_time % period for flow in high} == {0}
    assert {flow.src for flow in high} == set(range(1, 9))
    assert all(flow.dst == 0 and flow.size == 500_000 for flow in high)
    # Nodes 1..8 are workers, so storage traffic comes from node 9.
    assert low and {flow.src for flow in low} == {9}
    assert all(flow.dst == 0 for flow in low)


def test_hybrid_targets_client_from_both_classes() -> None:
    scenario = _make_scenario(
        generator="hybrid",
        client_node=0,
        hp_load=0.4,
        lp_load=0.4,
        total_load=0.8,
        sizes=SizeConfig(kind="fixed", size_bytes=128 * KB),
    )
    trace = generate_trace(scenario, 6)

    assert {flow.priority_class for flow in trace} == {0, 1}
    assert all(flow.dst == 0 and flow.src != 0 for flow in trace)


def test_hybrid_rejects_loads_above_total() -> None:
    scenario = _make_scenario(generator="hybrid", hp_load=0.6, lp_load=0.4, total_load=0.8)

    with pytest.raises(ConfigError):
        generate_trace(scenario, 1)


def test_uniform_sizes_stay_in_range_with_expected_mean() -> None:
    dist = UniformSize(1_000)
    rng = RngStream(5, "sizes")
    samples = np.array([sample_size(dist, rng) for _ in range(20_000)])

    assert samples.min() >= 1 and samples.max() <= 2_000
    assert samples.mean() == pytest.approx(dist.mean_bytes, rel=0.02)
    assert sample_size(FixedSize(77), rng) == 77


def test_empirical_cdf_interpolates_and_reports_mean() -> None:
    cdf = EmpiricalCdf(((100.0, 0.0), (100.0, 0.5), (300.0, 1.0)))

    assert cdf.quantile(0.25) == 100.0
    assert cdf.quantile(0.75) == 200.0
    assert cdf.mean_bytes == pytest.approx(150.0)


def test_empirical_cdf_rejects_bad_points() -> None:
    with pytest.raises(ConfigError):
        EmpiricalCdf(((100.0, 0.5), (50.0, 1.0)))
    with pytest.raises(ConfigError):
        EmpiricalCdf(((100.0, 0.5), (200.0, 0.9)))
