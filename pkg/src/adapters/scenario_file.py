"""Scenario and sweep JSON files.

Scenario files mirror the `core.config` dataclasses section by section and
only need to state what differs from the defaults. Dumping always writes the
fully materialized, normalized form.
"""

from __future__ import annotations

import copy
import dataclasses
import itertools
import json
import os
import typing
from pathlib import Path
from typing import Any, Optional, Union

from core.config import SWEEP_MODES, ConfigError, ScenarioConfig, SweepAxis, SweepSpec, TRANSPORT_VARIANTS


def _is_optional(hint: Any) -> tuple[bool, Any]:
    if typing.get_origin(hint) is Union:
        args = [arg for arg in typing.get_args(hint) if arg is not type(None)]
        if len(args) == 1 and len(typing.get_args(hint)) == 2:
            return True, args[0]
    return False, hint


def _convert(value: Any, hint: Any, path: str) -> Any:
    optional, hint = _is_optional(hint)
    if value is None:
        if optional:
            return None
        raise ConfigError([f"{path} must not be null"])
    if dataclasses.is_dataclass(hint):
        if not isinstance(value, dict):
            raise ConfigError([f"{path} must be an object"])
        return from_dict(hint, value, path)
    origin = typing.get_origin(hint)
    if origin is tuple:
        if not isinstance(value, list):
            raise ConfigError([f"{path} must be a list"])
        args = typing.get_args(hint)
        item_hint = args[0]
        return tuple(_convert(item, item_hint, f"{path}.{index}") for index, item in enumerate(value))
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError([f"{path} must be true or false"])
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError([f"{path} must be an integer"])
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError([f"{path} must be a number"])
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError([f"{path} must be a string"])
        return value
    raise ConfigError([f"{path} has an unsupported type"])


def from_dict(cls: type, data: dict, path: str = "") -> Any:
    """Build dataclass `cls` from a plain mapping, rejecting unknown keys."""

    hints = typing.get_type_hints(cls)
    names = [field.name for field in dataclasses.fields(cls)]
    unknown = sorted(set(data) - set(names))
    if unknown:
        prefix = f"{path}." if path else ""
        raise ConfigError([f"unknown key {prefix}{key}" for key in unknown])
    kwargs = {}
    for name in names:
        if name in data:
            kwargs[name] = _convert(data[name], hints[name], f"{path}.{name}" if path else name)
    return cls(**kwargs)


def to_dict(instance: Any) -> Any:
    if dataclasses.is_dataclass(instance):
        return {field.name: to_dict(getattr(instance, field.name)) for field in dataclasses.fields(instance)}
    if isinstance(instance, tuple):
        return [to_dict(item) for item in instance]
    return instance


def parse_scenario(data: dict) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError(["scenario must be a JSON object"])
    return from_dict(ScenarioConfig, data)


def dump_scenario(config: ScenarioConfig) -> str:
    """Normalized text form: every field present, fixed order, trailing newline."""

    return json.dumps(to_dict(config), indent=2, ensure_ascii=True) + "\n"


def _read_json(path: Union[str, Path]) -> Any:
    if not os.path.exists(path):
        raise ConfigError([f"file not found: {path}"])
    with open(path, "r", encoding="utf-8") as handle:
        try:
            return json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})"]) from exc


def load_scenario(path: Union[str, Path]) -> ScenarioConfig:
    return parse_scenario(_read_json(path))


def apply_overrides(config: ScenarioConfig, overrides: dict[str, Any]) -> ScenarioConfig:
    """Return a copy of `config` with dotted keys replaced, e.g. `transports.1.tcp.rto_min_ns`."""

    data = to_dict(config)
    problems = []
    for key, value in overrides.items():
        node: Any = data
        parts = key.split(".")
        try:
            for part in parts[:-1]:
                node = node[int(part)] if isinstance(node, list) else node[part]
            last = parts[-1]
            if isinstance(node, list):
                node[int(last)] = copy.deepcopy(value)
            elif last in node:
                node[last] = copy.deepcopy(value)
            else:
                raise KeyError(last)
        except (KeyError, IndexError, ValueError, TypeError):
            problems.append(f"override key {key!r} does not exist in the base scenario")
    if problems:
        raise ConfigError(problems)
    return parse_scenario(data)


def _axis_from_json(name: str, raw_values: Any) -> SweepAxis:
    if not isinstance(raw_values, list) or not raw_values:
        raise ConfigError([f"sweep axis {name!r} must be a non-empty list"])
    values = []
    labels = []
    for raw in raw_values:
        if isinstance(raw, dict):
            bundle = dict(raw)
            label = str(bundle.pop("label", "")) or ",".join(f"{k}={v}" for k, v in bundle.items())
            values.append(bundle)
            labels.append(label)
        else:
            values.append({name: raw})
            labels.append(str(raw))
    return SweepAxis(name=name, values=tuple(values), labels=tuple(labels))


def parse_sweep(data: dict, base_dir: Union[str, Path] = ".") -> SweepSpec:
    if not isinstance(data, dict):
        raise ConfigError(["sweep spec must be a JSON object"])
    unknown = sorted(set(data) - {"base", "mode", "seeds", "axes", "candidate"})
    if unknown:
        raise ConfigError([f"unknown key {key} in sweep spec" for key in unknown])
    base_raw = data.get("base")
    if isinstance(base_raw, str):
        base_path = base_raw if os.path.isabs(base_raw) else os.path.join(base_dir, base_raw)
        base = load_scenario(base_path)
    elif isinstance(base_raw, dict):
        base = parse_scenario(base_raw)
    else:
        raise ConfigError(["sweep base must be a scenario path or an inline scenario object"])
    mode = data.get("mode", "run")
    if mode not in SWEEP_MODES:
        raise ConfigError([f"sweep mode must be one of {', '.join(SWEEP_MODES)}"])
    candidate: Optional[str] = data.get("candidate")
    if candidate is not None and candidate not in TRANSPORT_VARIANTS:
        raise ConfigError([f"sweep candidate must be one of {', '.join(TRANSPORT_VARIANTS)}"])
    seeds = data.get("seeds", list(base.run.seeds))
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds):
        raise ConfigError(["sweep seeds must be a non-empty list of integers"])
    axes_raw = data.get("axes", {})
    if not isinstance(axes_raw, dict):
        raise ConfigError(["sweep axes must be an object of axis name to values"])
    axes = tuple(_axis_from_json(name, values) for name, values in axes_raw.items())
    spec = SweepSpec(base=base, axes=axes, mode=mode, seeds=tuple(seeds), candidate=candidate)
    # Every override must resolve against the base before any run starts.
    for overrides, _ in grid_points(spec):
        apply_overrides(base, overrides)
    return spec


def load_sweep(path: Union[str, Path]) -> SweepSpec:
    return parse_sweep(_read_json(path), base_dir=os.path.dirname(os.path.abspath(path)))


def grid_points(spec: SweepSpec) -> list[tuple[dict[str, Any], str]]:
    """Cartesian product of the axes as (merged overrides, label) pairs."""

    if not spec.axes:
        return [({}, "base")]
    points = []
    for combo in itertools.product(*(range(len(axis.values)) for axis in spec.axes)):
        overrides: dict[str, Any] = {}
        labels = []
        for axis, index in zip(spec.axes, combo):
            overrides.update(axis.values[index])
            labels.append(f"{axis.name}={axis.labels[index]}")
        points.append((overrides, ";".join(labels)))
    return points
