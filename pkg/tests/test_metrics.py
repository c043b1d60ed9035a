from __future__ import annotations

from dataclasses import replace

import pytest

from core.metrics import (
    MetricsCollector,
    MetricsError,
    RunSummary,
    cdf_points,
    normalize_paired,
    percentile,
    retransmission_rate,
    trace_digest,
)
from core.models import LONG, MEDIUM, SMALL, FlowCounters, FlowRecord, FlowSpec, size_class_of
from core.units import KB, MB


def _spec(flow_id: int, size: int = 10 * KB, arrival: int = 0, cls: int = 1) -> FlowSpec:
    return FlowSpec(flow_id=flow_id, src=1, dst=0, size=size, priority_class=cls, arrival_time=arrival)


def _record(flow_id: int, fct: int, size: int = 10 * KB, cls: int = 1, sent: int = 10, retx: int = 0) -> FlowRecord:
    return FlowRecord(
        flow_id=flow_id,
        size=size,
        priority_class=cls,
        size_class=size_class_of(size),
        arrival_time=0,
        completion_time=fct,
        fct=fct,
        packets_sent=sent,
        packets_retransmitted=retx,
        spurious_retransmissions=0,
    )


def _summary(transport: str, records: list[FlowRecord], digest: str = "abc") -> RunSummary:
    return RunSummary(
        scenario="unit",
        transport=transport,
        seed=1,
        selected_class=1,
        records=tuple(records),
        censored=(),
        trace_digest=digest,
        drops=0,
        ledger_drops=0,
        events=0,
        protocol_faults=0,
        busiest_link="switch->host0",
    )


def test_percentile_uses_nearest_rank() -> None:
    assert percentile([5, 1, 3, 2, 4], 50) == 3
    assert percentile([5, 1, 3, 2, 4], 100) == 5
    assert percentile(list(range(1, 1001)), 99.9) == 1000
    assert percentile([7], 0.1) == 7


def test_percentile_rejects_empty_input_and_bad_rank() -> None:
    with pytest.raises(MetricsError):
        percentile([], 50)
    with pytest.raises(MetricsError):
        percentile([1, 2], 0)
    with pytest.raises(MetricsError):
        percentile([1, 2], 101)


def test_size_classes_use_binary_units() -> None:
    assert size_class_of(50 * KB - 1) == SMALL
    assert size_class_of(50 * KB) == MEDIUM
    assert size_class_of(MB) == MEDIUM
    assert size_class_of(MB + 1) == LONG


def test_collector_records_fct_and_tracks_censored_flows() -> None:
    collector = MetricsCollector()
    for flow_id in range(3):
        collector.register(_spec(flow_id, arrival=100))

    record = collector.record_completion(_spec(1, arrival=100), 600, FlowCounters(8, 2, 1))

    assert record.fct == 500
    assert retransmission_rate(record) == 0.25
    assert [spec.flow_id for spec in collector.censored] == [0, 2]


def test_collector_rejects_double_completion_and_non_positive_fct() -> None:
    collector = MetricsCollector()
    collector.register(_spec(1, arrival=100))
    collector.record_completion(_spec(1, arrival=100), 200, FlowCounters(1, 0, 0))

    with pytest.raises(MetricsError):
        collector.record_completion(_spec(1, arrival=100), 300, FlowCounters(1, 0, 0))
    with pytest.raises(MetricsError):
        collector.record_completion(_spec(2, arrival=100), 100, FlowCounters(1, 0, 0))


def test_summary_reports_only_selected_class() -> None:
    summary = _summary("tcp", [_record(1, 100), _record(2, 900, cls=0), _record(3, 300, size=200 * KB)])

    assert summary.fct_samples() == [100, 300]
    assert summary.fct_samples(MEDIUM) == [300]
    stats = summary.class_fct_stats()
    assert set(stats) == {SMALL, MEDIUM, "all"}
    assert stats["all"].count == 2
    assert stats["all"].avg == 200.0


def test_paired_normalization_joins_on_flow_id() -> None:
    candidate = _summary("cubic-sack", [_record(1, 400), _record(2, 900), _record(4, 50)])
    baseline = _summary("nearopt", [_record(1, 100), _record(2, 300), _record(3, 70)])

    paired = normalize_paired(candidate, baseline)

    assert [(entry.flow_id, entry.normalized_fct) for entry in paired.entries] == [(1, 4.0), (2, 3.0)]
    assert paired.leftovers == ((3, "nearopt"), (4, "cubic-sack"))
    assert paired.stats()["all"].p99 == 4.0


def test_paired_normalization_requires_the_same_trace() -> None:
    candidate = _summary("cubic-sack", [_record(1, 400)], digest="one")
    baseline = _summary("nearopt", [_record(1, 100)], digest="two")

    with pytest.raises(MetricsError):
        normalize_paired(candidate, baseline)
    with pytest.raises(MetricsError):
        normalize_paired(replace(candidate, trace_digest="two"), replace(baseline, selected_class=0))


def test_cdf_points_collapse_duplicates() -> None:
    points = cdf_points([3, 1, 3])

    assert points == [(1.0, pytest.approx(1 / 3)), (3.0, 1.0)]
    assert cdf_points([]) == []


def test_trace_digest_changes_with_any_field() -> None:
    base = [_spec(0), _spec(1, arrival=50)]

    assert trace_digest(base) == trace_digest(list(base))
    assert trace_digest(base) != trace_digest([_spec(0), _spec(1, arrival=51)])
