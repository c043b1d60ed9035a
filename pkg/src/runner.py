"""Application layer for the backseat subcommands.

Each function takes parsed inputs and an output directory and returns what
it produced, so the CLI stays a thin shell and tests can drive runs without
argument parsing.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from contextlib import contextmanager
from contextvars import ContextVar
from pathlib import Path
from typing import Iterator, Optional, Sequence, Union

from rich.progress import Progress

from adapters.cdf_file import size_distribution_for
from adapters.csv_results import CsvResultWriter
from adapters.scenario_file import apply_overrides, dump_scenario, grid_points, load_scenario
from adapters.sqlite_index import SweepIndex
from core.config import ScenarioConfig, SweepSpec, ensure_valid
from core.metrics import PairedResult, RunSummary, normalize_paired
from core.models import FlowSpec
from core.ports import ResultWriterPort, SweepIndexPort
from core.simulation import simulate, transport_label
from core.workloads import generate_trace

LOGGER = logging.getLogger(__name__)

BASELINE_VARIANT = "nearopt"
INDEX_FILENAME = "index.sqlite"

RUN_CONTEXT: ContextVar[str] = ContextVar("run_context", default="-")


class RunContextFilter(logging.Filter):
    """Stamps each record with the run it belongs to."""

    def filter(self, record: logging.LogRecord) -> bool:
        record.run_context = RUN_CONTEXT.get()
        return True


@contextmanager
def run_context(config: ScenarioConfig, seed: int) -> Iterator[None]:
    label = transport_label(config.transports[config.low_priority_class])
    token = RUN_CONTEXT.set(f"{config.name}/{label}/seed{seed}")
    try:
        yield
    finally:
        RUN_CONTEXT.reset(token)


def default_seed(config: ScenarioConfig) -> int:
    return config.run.seeds[0]


def build_trace(
    config: ScenarioConfig,
    seed: int,
    search_dirs: Optional[Sequence[Union[str, Path]]] = None,
) -> list[FlowSpec]:
    ensure_valid(config)
    sizes = size_distribution_for(config, list(search_dirs or []))
    return generate_trace(config, seed, sizes)


def with_low_priority_variant(config: ScenarioConfig, variant: str) -> ScenarioConfig:
    """Copy of `config` whose lowest class uses `variant`; all else unchanged."""

    transports = list(config.transports)
    low = config.low_priority_class
    transports[low] = dataclasses.replace(transports[low], variant=variant)
    return dataclasses.replace(config, transports=tuple(transports))


def run(
    config: ScenarioConfig,
    seed: int,
    outdir: Path,
    writer: Optional[ResultWriterPort] = None,
    search_dirs: Optional[Sequence[Union[str, Path]]] = None,
) -> tuple[RunSummary, list[Path]]:
    writer = writer or CsvResultWriter()
    trace = build_trace(config, seed, search_dirs)
    with run_context(config, seed):
        summary = simulate(config, seed, trace)
        files = writer.write_run(summary, Path(outdir))
    return summary, files


def run_paired(
    config: ScenarioConfig,
    seed: int,
    outdir: Path,
    candidate: Optional[str] = None,
    writer: Optional[ResultWriterPort] = None,
    search_dirs: Optional[Sequence[Union[str, Path]]] = None,
) -> tuple[PairedResult, list[Path]]:
    """Run one trace twice, candidate vs Near-Opt at the lowest class, and normalize."""

    writer = writer or CsvResultWriter()
    if candidate is not None:
        config = with_low_priority_variant(config, candidate)
    baseline = with_low_priority_variant(config, BASELINE_VARIANT)
    trace = build_trace(config, seed, search_dirs)
    outdir = Path(outdir)
    files: list[Path] = []
    summaries = []
    for side in (config, ensure_valid(baseline)):
        with run_context(side, seed):
            summary = simulate(side, seed, trace)
            files.extend(writer.write_run(summary, outdir))
        summaries.append(summary)
    paired = normalize_paired(summaries[0], summaries[1])
    files.extend(writer.write_paired(paired, outdir))
    return paired, files


@dataclasses.dataclass(frozen=True)
class SweepJob:
    point_key: str
    label: str
    overrides: dict
    seed: int
    config: ScenarioConfig
    mode: str
    candidate: Optional[str]
    root: str
    search_dirs: tuple[str, ...]


def execute_job(job: SweepJob) -> list[str]:
    """Run one grid point for one seed; returns files relative to the sweep root."""

    root = Path(job.root)
    pointdir = root / job.point_key
    if job.mode == "paired":
        _, files = run_paired(job.config, job.seed, pointdir, job.candidate, search_dirs=job.search_dirs)
    else:
        _, files = run(job.config, job.seed, pointdir, search_dirs=job.search_dirs)
    return [path.relative_to(root).as_posix() for path in files]


def plan_sweep(
    spec: SweepSpec,
    outdir: Path,
    index: SweepIndexPort,
    search_dirs: Sequence[Union[str, Path]] = (),
) -> list[SweepJob]:
    jobs = []
    for number, (overrides, label) in enumerate(grid_points(spec)):
        point_key = f"point_{number:03d}"
        config = ensure_valid(apply_overrides(spec.base, overrides))
        for seed in spec.seeds:
            if index.is_complete(point_key, seed, str(outdir)):
                LOGGER.info("Skipping %s seed %s: already indexed", point_key, seed)
                continue
            jobs.append(
                SweepJob(
                    point_key=point_key,
                    label=label,
                    overrides=overrides,
                    seed=seed,
                    config=config,
                    mode=spec.mode,
                    candidate=spec.candidate,
                    root=str(outdir),
                    search_dirs=tuple(str(path) for path in search_dirs),
                )
            )
    return jobs


def sweep(
    spec: SweepSpec,
    outdir: Path,
    workers: int = 1,
    search_dirs: Sequence[Union[str, Path]] = (),
) -> list[dict]:
    """Run every (grid point, seed) not yet in the index and return the index rows."""

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    index = SweepIndex(str(outdir / INDEX_FILENAME))
    index.init_db()
    jobs = plan_sweep(spec, outdir, index, search_dirs)
    LOGGER.info("Sweep has %s runs to execute with %s workers", len(jobs), workers)

    def _record(job: SweepJob, files: list[str]) -> None:
        index.record(job.point_key, job.seed, job.label, json.dumps(job.overrides, sort_keys=True), files)

    with Progress(transient=True) as progress:
        task = progress.add_task("sweep", total=len(jobs))
        if workers <= 1:
            for job in jobs:
                _record(job, execute_job(job))
                progress.advance(task)
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = {pool.submit(execute_job, job): job for job in jobs}
                for future in as_completed(futures):
                    _record(futures[future], future.result())
                    progress.advance(task)
    return index.rows()


def validate(path: Union[str, Path]) -> str:
    """Parse and check a scenario file; return its normalized form."""

    config = load_scenario(path)
    ensure_valid(config)
    return dump_scenario(config)

