from __future__ import annotations

from adapters.result_formatting import format_ns, format_ratio, run_table, sweep_table
from core.metrics import RunSummary
from core.models import FlowRecord, size_class_of


def _summary() -> RunSummary:
    record = FlowRecord(
        flow_id=1,
        size=4096,
        priority_class=1,
        size_class=size_class_of(4096),
        arrival_time=0,
        completion_time=250_000,
        fct=250_000,
        packets_sent=3,
        packets_retransmitted=0,
        spurious_retransmissions=0,
    )
    return RunSummary(
        scenario="fmt",
        transport="newreno",
        seed=3,
        selected_class=1,
        records=(record,),
        censored=(7,),
        trace_digest="x",
        drops=2,
        ledger_drops=2,
        events=99,
        protocol_faults=0,
        busiest_link="switch->host0",
    )


def test_format_ns_picks_readable_unit() -> None:
    assert format_ns(None) == "-"
    assert format_ns(850) == "850ns"
    assert format_ns(12_500) == "12.5us"
    assert format_ns(3_200_000) == "3.20ms"
    assert format_ns(1_250_000_000) == "1.250s"


def test_format_ratio() -> None:
    assert format_ratio(None) == "-"
    assert format_ratio(1.5) == "1.50x"


def test_run_table_lists_size_classes_and_caption() -> None:
    table = run_table(_summary())

    assert "fmt / newreno / seed 3" in str(table.title)
    assert table.row_count == 2  # small + all
    assert "censored 1" in str(table.caption)
    assert "events 99" in str(table.caption)


def test_sweep_table_counts_files() -> None:
    table = sweep_table([{"point_key": "point_000", "seed": 1, "label": "base", "files": ["a", "b"]}])

    assert table.row_count == 1
    assert list(table.columns[3].cells) == ["2"]
