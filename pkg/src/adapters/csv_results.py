"""Result file adapter: flow CSVs, CDF series and run summaries.

Implements the core ResultWriterPort. Every writer is deterministic so a
re-run of the same (scenario, seed) produces byte-identical files.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict
from pathlib import Path
from typing import Iterable, Sequence

from core.metrics import PairedResult, RunSummary, SizeClassStats, cdf_points
from core.models import SIZE_CLASSES

LOGGER = logging.getLogger(__name__)

FLOW_COLUMNS = ["flow_id", "size", "class", "size_class", "arrival_ns", "fct_ns", "retx", "spurious"]
PAIRED_COLUMNS = ["flow_id", "size", "size_class", "fct_candidate_ns", "fct_baseline_ns", "normalized_fct"]
STATS_COLUMNS = ["size_class", "count", "avg", "p50", "p99", "p999"]
UTILIZATION_COLUMNS = ["bin_start_ns", "bytes", "utilization"]


def run_stem(summary: RunSummary) -> str:
    return f"{summary.scenario}__{summary.transport}__seed{summary.seed}"


def paired_stem(paired: PairedResult) -> str:
    return f"{paired.scenario}__{paired.candidate}-vs-{paired.baseline}__seed{paired.seed}"


def format_number(value: float) -> str:
    if value is None:
        return ""
    number = float(value)
    if number.is_integer():
        return str(int(number))
    return repr(number)


def _write_rows(path: Path, fieldnames: list[str], rows: Iterable[dict]) -> Path:
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return path


def write_cdf(path: Path, samples: Sequence[float]) -> Path:
    rows = (
        {"value": format_number(value), "cumulative_fraction": format_number(fraction)}
        for value, fraction in cdf_points(samples)
    )
    return _write_rows(path, ["value", "cumulative_fraction"], rows)


def _stats_rows(stats: dict[str, SizeClassStats]) -> list[dict]:
    return [
        {
            "size_class": size_class,
            "count": entry.count,
            "avg": format_number(entry.avg),
            "p50": format_number(entry.p50),
            "p99": format_number(entry.p99),
            "p999": format_number(entry.p999),
        }
        for size_class, entry in stats.items()
    ]


class CsvResultWriter:
    """Writes run and paired results as CSV, CDF and JSON files."""

    def write_run(self, summary: RunSummary, outdir: Path) -> list[Path]:
        outdir.mkdir(parents=True, exist_ok=True)
        stem = run_stem(summary)
        written = [
            _write_rows(
                outdir / f"{stem}.csv",
                FLOW_COLUMNS,
                (
                    {
                        "flow_id": record.flow_id,
                        "size": record.size,
                        "class": record.priority_class,
                        "size_class": record.size_class,
                        "arrival_ns": record.arrival_time,
                        "fct_ns": record.fct,
                        "retx": record.packets_retransmitted,
                        "spurious": record.spurious_retransmissions,
                    }
                    for record in summary.records
                ),
            )
        ]
        for size_class in SIZE_CLASSES:
            samples = summary.fct_samples(size_class)
            if samples:
                written.append(write_cdf(outdir / f"{stem}__fct_{size_class}.cdf", samples))
        written.append(write_cdf(outdir / f"{stem}__retx.cdf", summary.retransmission_samples()))
        written.append(
            _write_rows(
                outdir / f"{stem}__util.csv",
                UTILIZATION_COLUMNS,
                (
                    {
                        "bin_start_ns": row.bin_start_ns,
                        "bytes": row.bytes,
                        "utilization": format_number(row.utilization),
                    }
                    for row in summary.utilization
                ),
            )
        )
        written.append(self._write_summary(outdir / f"{stem}__summary.json", summary))
        LOGGER.info("Wrote %s result files for %s", len(written), stem)
        return written

    def write_paired(self, paired: PairedResult, outdir: Path) -> list[Path]:
        outdir.mkdir(parents=True, exist_ok=True)
        stem = paired_stem(paired)
        written = [
            _write_rows(
                outdir / f"{stem}.csv",
                PAIRED_COLUMNS,
                (
                    {
                        "flow_id": entry.flow_id,
                        "size": entry.size,
                        "size_class": entry.size_class,
                        "fct_candidate_ns": entry.fct_candidate,
                        "fct_baseline_ns": entry.fct_baseline,
                        "normalized_fct": format_number(entry.normalized_fct),
                    }
                    for entry in paired.entries
                ),
            )
        ]
        for size_class in SIZE_CLASSES:
            ratios = paired.ratios(size_class)
            if ratios:
                written.append(write_cdf(outdir / f"{stem}__norm_{size_class}.cdf", ratios))
        written.append(_write_rows(outdir / f"{stem}__stats.csv", STATS_COLUMNS, _stats_rows(paired.stats())))
        written.append(
            _write_rows(
                outdir / f"{stem}__leftovers.csv",
                ["flow_id", "completed_by"],
                ({"flow_id": flow_id, "completed_by": side} for flow_id, side in paired.leftovers),
            )
        )
        LOGGER.info("Wrote %s paired result files for %s", len(written), stem)
        return written

    @staticmethod
    def _write_summary(path: Path, summary: RunSummary) -> Path:
        payload = {
            "scenario": summary.scenario,
            "transport": summary.transport,
            "seed": summary.seed,
            "selected_class": summary.selected_class,
            "completed": len(summary.selected),
            "censored": summary.censored_count,
            "drops": summary.drops,
            "ledger_drops": summary.ledger_drops,
            "spurious_retransmissions": summary.spurious_total(),
            "protocol_faults": summary.protocol_faults,
            "events": summary.events,
            "busiest_link": summary.busiest_link,
            "trace_digest": summary.trace_digest,
            "fct": {name: asdict(stats) for name, stats in summary.class_fct_stats().items()},
        }
        path.write_text(json.dumps(payload, indent=2, ensure_ascii=True) + "\n", encoding="utf-8")
        return path
