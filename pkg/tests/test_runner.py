from __future__ import annotations

import json
from pathlib import Path

import pytest

import app
import runner
from adapters.csv_results import FLOW_COLUMNS
from adapters.scenario_file import dump_scenario, parse_scenario, parse_sweep
from core.config import ConfigError, ScenarioConfig

TINY = {
    "name": "tiny",
    "topology": {"nodes": 4, "link_rate_bps": 1_000_000_000},
    "workload": {"generator": "das", "load": 0.3, "sizes": {"kind": "fixed", "size_bytes": 16_384}},
    "run": {"duration_ns": 5_000_000, "drain_ns": 50_000_000, "seeds": [1, 2]},
}


def _tiny() -> ScenarioConfig:
    return parse_scenario(TINY)


def _write_scenario(directory: Path, data: dict) -> Path:
    path = directory / "scenario.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


def test_run_writes_flow_table_cdfs_and_summary(tmp_path: Path) -> None:
    summary, files = runner.run(_tiny(), 1, tmp_path)

    names = {path.name for path in files}
    assert "tiny__cubic-sack__seed1.csv" in names
    assert "tiny__cubic-sack__seed1__summary.json" in names
    assert "tiny__cubic-sack__seed1__retx.cdf" in names
    assert "tiny__cubic-sack__seed1__util.csv" in names
    assert all(path.exists() for path in files)

    header = (tmp_path / "tiny__cubic-sack__seed1.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header == ",".join(FLOW_COLUMNS)
    payload = json.loads((tmp_path / "tiny__cubic-sack__seed1__summary.json").read_text(encoding="utf-8"))
    assert payload["seed"] == 1
    assert payload["completed"] == len(summary.selected)
    assert payload["trace_digest"] == summary.trace_digest


def test_rerun_is_byte_identical(tmp_path: Path) -> None:
    _, first = runner.run(_tiny(), 2, tmp_path / "a")
    _, second = runner.run(_tiny(), 2, tmp_path / "b")

    assert [path.name for path in first] == [path.name for path in second]
    for left, right in zip(first, second):
        assert left.read_bytes() == right.read_bytes(), left.name


def test_paired_run_normalizes_against_nearopt(tmp_path: Path) -> None:
    paired, files = runner.run_paired(_tiny(), 1, tmp_path, candidate="ledbat")

    assert paired.candidate == "ledbat"
    assert paired.baseline == "nearopt"
    assert paired.candidate_summary.trace_digest == paired.baseline_summary.trace_digest
    names = {path.name for path in files}
    assert "tiny__ledbat-vs-nearopt__seed1.csv" in names
    assert "tiny__ledbat-vs-nearopt__seed1__stats.csv" in names
    assert "tiny__nearopt__seed1.csv" in names
    assert all(entry.normalized_fct > 0 for entry in paired.entries)


def test_low_priority_variant_swap_leaves_other_classes_alone() -> None:
    config = runner.with_low_priority_variant(_tiny(), "tcplp")

    assert [t.variant for t in config.transports] == ["tcp", "tcplp"]
    assert config.transports[0] == _tiny().transports[0]


def test_sweep_indexes_runs_and_skips_them_next_time(tmp_path: Path) -> None:
    spec = parse_sweep({"base": TINY, "seeds": [1], "axes": {"transports.1.tcp.rto_min_ns": [1_000_000, 5_000_000]}})

    rows = runner.sweep(spec, tmp_path)

    assert [(row["point_key"], row["seed"]) for row in rows] == [("point_000", 1), ("point_001", 1)]
    assert rows[1]["label"] == "transports.1.tcp.rto_min_ns=5000000"
    assert rows[1]["overrides"] == {"transports.1.tcp.rto_min_ns": 5_000_000}
    for row in rows:
        assert all((tmp_path / name).exists() for name in row["files"])

    index = runner.SweepIndex(str(tmp_path / runner.INDEX_FILENAME))
    assert runner.plan_sweep(spec, tmp_path, index) == []
    assert runner.sweep(spec, tmp_path) == rows


class FakeSweepIndex:
    def __init__(self, complete: set[tuple[str, int]]) -> None:
        self.complete = complete

    def lookup(self, point_key: str, seed: int):
        return None

    def is_complete(self, point_key: str, seed: int, root: str) -> bool:
        return (point_key, seed) in self.complete

    def record(self, point_key: str, seed: int, label: str, overrides_json: str, files: list[str]) -> None:
        pass


def test_plan_sweep_asks_the_index_which_runs_are_done(tmp_path: Path) -> None:
    spec = parse_sweep({"base": TINY, "seeds": [1, 2], "axes": {"workload.load": [0.2, 0.3]}})

    jobs = runner.plan_sweep(spec, tmp_path, FakeSweepIndex({("point_000", 1), ("point_001", 2)}))

    assert [(job.point_key, job.seed) for job in jobs] == [("point_000", 2), ("point_001", 1)]
    assert jobs[1].config.workload.load == 0.3


def test_sweep_reruns_points_whose_files_vanished(tmp_path: Path) -> None:
    spec = parse_sweep({"base": TINY, "seeds": [1]})
    rows = runner.sweep(spec, tmp_path)
    (tmp_path / rows[0]["files"][0]).unlink()

    index = runner.SweepIndex(str(tmp_path / runner.INDEX_FILENAME))
    jobs = runner.plan_sweep(spec, tmp_path, index)

    assert [(job.point_key, job.seed) for job in jobs] == [("point_000", 1)]


def test_validate_returns_normalized_scenario(tmp_path: Path) -> None:
    path = _write_scenario(tmp_path, TINY)

    assert runner.validate(path) == dump_scenario(_tiny())


def test_validate_rejects_invalid_scenario(tmp_path: Path) -> None:
    path = _write_scenario(tmp_path, {**TINY, "topology": {"nodes": 1}})

    with pytest.raises(ConfigError):
        runner.validate(path)


def test_cli_validate_prints_normalized_form(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    path = _write_scenario(tmp_path, TINY)

    assert app.main(["validate", str(path)]) == app.EXIT_OK
    assert capsys.readouterr().out == dump_scenario(_tiny())


def test_cli_reports_each_violation_and_exits_with_config_error(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    path = _write_scenario(tmp_path, {**TINY, "topology": {"nodes": 1}, "workload": {"load": 1.5}})

    assert app.main(["validate", str(path)]) == app.EXIT_CONFIG_ERROR
    errors = capsys.readouterr().err.splitlines()
    assert len(errors) >= 2
    assert all(line.startswith("error: ") for line in errors)


def test_cli_unknown_key_is_a_config_error(tmp_path: Path) -> None:
    path = _write_scenario(tmp_path, {**TINY, "extra": True})

    assert app.main(["validate", str(path)]) == app.EXIT_CONFIG_ERROR


def test_cli_run_writes_into_out_dir(tmp_path: Path) -> None:
    path = _write_scenario(tmp_path, TINY)
    out = tmp_path / "out"

    assert app.main(["run", str(path), "--seed", "2", "--out", str(out)]) == app.EXIT_OK
    assert (out / "tiny__cubic-sack__seed2.csv").exists()
