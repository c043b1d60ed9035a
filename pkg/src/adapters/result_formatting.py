"""Shared console formatting for run, paired and sweep results.

Keeping formatting here keeps the tables consistent between subcommands.
"""

from __future__ import annotations

from typing import Optional

from rich.table import Table

from core.metrics import PairedResult, RunSummary, SizeClassStats


def format_ns(value: Optional[float]) -> str:
    """Human-friendly simulated duration: 850ns, 12.5us, 3.20ms, 1.250s."""

    if value is None:
        return "-"
    if value < 1_000:
        return f"{value:.0f}ns"
    if value < 1_000_000:
        return f"{value / 1_000:.1f}us"
    if value < 1_000_000_000:
        return f"{value / 1_000_000:.2f}ms"
    return f"{value / 1_000_000_000:.3f}s"


def format_ratio(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.2f}x"


def _add_stats_rows(table: Table, stats: dict[str, SizeClassStats], fmt) -> None:
    for size_class, entry in stats.items():
        table.add_row(
            size_class,
            str(entry.count),
            fmt(entry.avg),
            fmt(entry.p50),
            fmt(entry.p99),
            fmt(entry.p999),
        )


def _stats_table(title: str) -> Table:
    table = Table(title=title)
    table.add_column("size class")
    table.add_column("flows", justify="right")
    for name in ("avg", "p50", "p99", "p99.9"):
        table.add_column(name, justify="right")
    return table


def run_table(summary: RunSummary) -> Table:
    title = (
        f"{summary.scenario} / {summary.transport} / seed {summary.seed}: "
        f"FCT of class {summary.selected_class}"
    )
    table = _stats_table(title)
    _add_stats_rows(table, summary.class_fct_stats(), format_ns)
    table.caption = (
        f"censored {summary.censored_count} | drops {summary.drops} | "
        f"spurious retx {summary.spurious_total()} | events {summary.events}"
    )
    return table


def paired_table(paired: PairedResult) -> Table:
    table = _stats_table(f"{paired.scenario}: {paired.candidate} normalized by {paired.baseline}, seed {paired.seed}")
    _add_stats_rows(table, paired.stats(), format_ratio)
    table.caption = f"paired flows {len(paired.entries)} | leftovers {len(paired.leftovers)}"
    return table


def sweep_table(rows: list[dict]) -> Table:
    table = Table(title="Sweep index")
    table.add_column("point")
    table.add_column("seed", justify="right")
    table.add_column("label")
    table.add_column("files", justify="right")
    for row in rows:
        table.add_row(row["point_key"], str(row["seed"]), row["label"], str(len(row["files"])))
    return table
