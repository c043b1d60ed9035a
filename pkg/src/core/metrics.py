"""Flow outcomes, percentiles and paired normalization."""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from core.models import SIZE_CLASSES, FlowCounters, FlowRecord, FlowSpec, size_class_of

LOGGER = logging.getLogger(__name__)

REPORTED_PERCENTILES = (50.0, 99.0, 99.9)


class MetricsError(ValueError):
    """Invalid metric input: empty samples, double completion, mismatched traces."""


def percentile(samples: Sequence[float], p: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest sample."""

    if len(samples) == 0:
        raise MetricsError("percentile of an empty sample set")
    if not 0 < p <= 100:
        raise MetricsError(f"percentile must be in (0, 100], got {p}")
    ordered = sorted(samples)
    rank = math.ceil(p / 100 * len(ordered))
    return ordered[min(max(rank, 1), len(ordered)) - 1]


def retransmission_rate(record: FlowRecord) -> float:
    if record.packets_sent <= 0:
        raise MetricsError(f"flow {record.flow_id} sent no packets")
    return record.packets_retransmitted / record.packets_sent


def trace_digest(trace: Sequence[FlowSpec]) -> str:
    digest = hashlib.sha256()
    for flow in trace:
        digest.update(
            f"{flow.flow_id},{flow.src},{flow.dst},{flow.size},{flow.priority_class},"
            f"{flow.arrival_time},{flow.twin_of}\n".encode("ascii")
        )
    return digest.hexdigest()


class MetricsCollector:
    """Per-run accumulator of completed flows."""

    def __init__(self) -> None:
        self._pending: dict[int, FlowSpec] = {}
        self.records: dict[int, FlowRecord] = {}

    def register(self, spec: FlowSpec) -> None:
        self._pending[spec.flow_id] = spec

    def record_completion(self, spec: FlowSpec, now: int, counters: FlowCounters) -> FlowRecord:
        if spec.flow_id in self.records:
            raise MetricsError(f"flow {spec.flow_id} completed twice")
        fct = now - spec.arrival_time
        if fct <= 0:
            raise MetricsError(f"flow {spec.flow_id} completed at {now}ns, not after its arrival")
        record = FlowRecord(
            flow_id=spec.flow_id,
            size=spec.size,
            priority_class=spec.priority_class,
            size_class=size_class_of(spec.size),
            arrival_time=spec.arrival_time,
            completion_time=now,
            fct=fct,
            packets_sent=counters.packets_sent,
            packets_retransmitted=counters.packets_retransmitted,
            spurious_retransmissions=counters.spurious_retransmissions,
        )
        self._pending.pop(spec.flow_id, None)
        self.records[spec.flow_id] = record
        return record

    @property
    def censored(self) -> list[FlowSpec]:
        return sorted(self._pending.values(), key=lambda spec: spec.flow_id)


@dataclass(frozen=True)
class UtilizationRow:
    bin_start_ns: int
    bytes: int
    utilization: float


@dataclass(frozen=True)
class RunSummary:
    scenario: str
    transport: str
    seed: int
    selected_class: int
    records: tuple[FlowRecord, ...]
    censored: tuple[int, ...]
    trace_digest: str
    drops: int
    ledger_drops: int
    events: int
    protocol_faults: int
    busiest_link: str
    utilization: tuple[UtilizationRow, ...] = ()

    @property
    def selected(self) -> list[FlowRecord]:
        return [record for record in self.records if record.priority_class == self.selected_class]

    @property
    def censored_count(self) -> int:
        return len(self.censored)

    def fct_samples(self, size_class: Optional[str] = None) -> list[int]:
        return [
            record.fct
            for record in self.selected
            if size_class is None or record.size_class == size_class
        ]

    def retransmission_samples(self) -> list[float]:
        return [retransmission_rate(record) for record in self.selected if record.packets_sent > 0]

    def spurious_total(self) -> int:
        return sum(record.spurious_retransmissions for record in self.selected)

    def class_fct_stats(self) -> dict[str, "SizeClassStats"]:
        return {
            size_class: summarize(self.fct_samples(size_class))
            for size_class in (*SIZE_CLASSES, "all")
            if size_class == "all" or self.fct_samples(size_class)
        }


@dataclass(frozen=True)
class SizeClassStats:
    count: int
    avg: Optional[float]
    p50: Optional[float]
    p99: Optional[float]
    p999: Optional[float]


def summarize(samples: Sequence[float]) -> SizeClassStats:
    if not samples:
        return SizeClassStats(0, None, None, None, None)
    return SizeClassStats(
        count=len(samples),
        avg=float(np.mean(samples)),
        p50=float(percentile(samples, 50.0)),
        p99=float(percentile(samples, 99.0)),
        p999=float(percentile(samples, 99.9)),
    )


@dataclass(frozen=True)
class PairedFlow:
    flow_id: int
    size: int
    size_class: str
    fct_candidate: int
    fct_baseline: int

    @property
    def normalized_fct(self) -> float:
        return self.fct_candidate / self.fct_baseline


@dataclass(frozen=True)
class PairedResult:
    scenario: str
    candidate: str
    baseline: str
    seed: int
    entries: tuple[PairedFlow, ...]
    # (flow_id, side that completed it) for flows finished in only one run.
    leftovers: tuple[tuple[int, str], ...] = ()
    candidate_summary: Optional[RunSummary] = field(default=None, compare=False)
    baseline_summary: Optional[RunSummary] = field(default=None, compare=False)

    def ratios(self, size_class: Optional[str] = None) -> list[float]:
        return [
            entry.normalized_fct
            for entry in self.entries
            if size_class is None or entry.size_class == size_class
        ]

    def stats(self) -> dict[str, SizeClassStats]:
        result = {}
        for size_class in (*SIZE_CLASSES, "all"):
            samples = self.ratios(None if size_class == "all" else size_class)
            if samples or size_class == "all":
                result[size_class] = summarize(samples)
        return result


def normalize_paired(candidate: RunSummary, baseline: RunSummary) -> PairedResult:
    """Join two runs of one trace on flow id and divide candidate FCT by baseline FCT."""

    if candidate.trace_digest != baseline.trace_digest:
        raise MetricsError(
            f"paired runs used different traces ({candidate.trace_digest[:12]} vs {baseline.trace_digest[:12]})"
        )
    if candidate.selected_class != baseline.selected_class:
        raise MetricsError("paired runs report different priority classes")
    ours = {record.flow_id: record for record in candidate.selected}
    theirs = {record.flow_id: record for record in baseline.selected}
    entries = []
    for flow_id in sorted(ours.keys() & theirs.keys()):
        mine = ours[flow_id]
        entries.append(
            PairedFlow(
                flow_id=flow_id,
                size=mine.size,
                size_class=mine.size_class,
                fct_candidate=mine.fct,
                fct_baseline=theirs[flow_id].fct,
            )
        )
    leftovers = sorted(
        [(flow_id, candidate.transport) for flow_id in ours.keys() - theirs.keys()]
        + [(flow_id, baseline.transport) for flow_id in theirs.keys() - ours.keys()]
    )
    if leftovers:
        LOGGER.warning("%s flows completed in only one of the paired runs", len(leftovers))
    return PairedResult(
        scenario=candidate.scenario,
        candidate=candidate.transport,
        baseline=baseline.transport,
        seed=candidate.seed,
        entries=tuple(entries),
        leftovers=tuple(leftovers),
        candidate_summary=candidate,
        baseline_summary=baseline,
    )


def cdf_points(samples: Sequence[float]) -> list[tuple[float, float]]:
    """Empirical CDF: one (value, fraction of samples <= value) pair per distinct value."""

    if not samples:
        return []
    values, counts = np.unique(np.asarray(samples, dtype=float), return_counts=True)
    fractions = np.cumsum(counts) / len(samples)
    return [(float(value), float(fraction)) for value, fraction in zip(values, fractions)]
