"""Empirical flow-size CDF files.

One `<size_bytes> <cumulative_probability>` pair per line, ascending, ending
at probability 1.0. Blank lines and `#` comments are ignored.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Optional, Union

from core.config import ConfigError, ScenarioConfig
from core.workloads import SizeDistribution, make_size_distribution, validate_cdf_points


def parse_cdf(text: str, source: str = "<cdf>") -> list[tuple[float, float]]:
    points = []
    problems = []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 2:
            problems.append(f"{source}:{number}: expected '<size> <probability>'")
            continue
        try:
            points.append((float(fields[0]), float(fields[1])))
        except ValueError:
            problems.append(f"{source}:{number}: not a number")
    if not problems:
        problems = [f"{source}: {problem}" for problem in validate_cdf_points(points)]
    if problems:
        raise ConfigError(problems)
    return points


def load_cdf(path: Union[str, Path]) -> list[tuple[float, float]]:
    if not os.path.exists(path):
        raise ConfigError([f"CDF file not found: {path}"])
    with open(path, "r", encoding="utf-8") as handle:
        return parse_cdf(handle.read(), str(path))


def resolve_cdf_path(cdf_path: str, search_dirs: list[Union[str, Path]]) -> str:
    if os.path.isabs(cdf_path):
        return cdf_path
    for directory in search_dirs:
        candidate = os.path.join(directory, cdf_path)
        if os.path.exists(candidate):
            return candidate
    return cdf_path


def size_distribution_for(
    scenario: ScenarioConfig,
    search_dirs: Optional[list[Union[str, Path]]] = None,
) -> SizeDistribution:
    """Build the scenario's size distribution, reading its CDF file when needed."""

    sizes = scenario.workload.sizes
    if sizes.kind != "cdf":
        return make_size_distribution(sizes)
    path = resolve_cdf_path(sizes.cdf_path, search_dirs or [])
    return make_size_distribution(sizes, load_cdf(path))
