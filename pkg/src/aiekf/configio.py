"""Flat key=value config files for scenario and filter-noise settings.

One ``key = value`` pair per line, ``#`` comments.  Values are coerced by
the target dataclass field: floats, ints, booleans (true/false), strings,
and comma-separated float lists for vector fields.  Slip events use
repeated ``slip_event`` lines with six numbers: leg t_start duration vx vy vz.
"""
from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np

from .model import NoiseConfig
from .simulator import ScenarioConfig, SlipEvent

__all__ = ["ConfigError", "parse_kv_file", "load_scenario", "load_noise"]


class ConfigError(ValueError):
    """Malformed config file or unknown key."""


def parse_kv_file(path) -> list[tuple[str, str, int]]:
    """Parse into (key, value, lineno) triples, preserving repeats."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: no such config file")
    out = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out.append((key.strip(), value.strip(), lineno))
    return out


def _coerce(value: str, current, path, lineno):
    try:
        if isinstance(current, bool):
            low = value.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        if isinstance(current, int):
            return int(value)
        if isinstance(current, float):
            return float(value)
        if isinstance(current, np.ndarray):
            vals = [float(v) for v in value.split(",")]
            if len(vals) == 1:
                vals = vals * current.size
            return np.array(vals, dtype=float).reshape(current.shape)
        return value
    except ValueError as exc:
        raise ConfigError(f"{path}:{lineno}: bad value for field: {exc}") from exc


def _apply(obj, entries, path, special=None):
    names = {f.name for f in dataclasses.fields(obj)}
    for key, value, lineno in entries:
        if special and key in special:
            special[key](value, lineno)
            continue
        if key not in names:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        setattr(obj, key, _coerce(value, getattr(obj, key), path, lineno))
    return obj


def load_scenario(path) -> ScenarioConfig:
    cfg = ScenarioConfig()
    entries = parse_kv_file(path)

    def slip_event(value, lineno):
        parts = value.replace(",", " ").split()
        if len(parts) != 6:
            raise ConfigError(
                f"{path}:{lineno}: slip_event needs 'leg t_start duration vx vy vz'")
        cfg.slip_events.append(SlipEvent(
            leg=int(parts[0]), t_start=float(parts[1]),
            duration=float(parts[2]),
            velocity=np.array([float(p) for p in parts[3:]])))

    _apply(cfg, entries, path, special={"slip_event": slip_event})
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return cfg


def load_noise(path) -> NoiseConfig:
    base = NoiseConfig()
    names = {f.name for f in dataclasses.fields(base)}
    kwargs = {}
    for key, value, lineno in parse_kv_file(path):
        if key not in names:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        kwargs[key] = _coerce(value, getattr(base, key), path, lineno)
    try:
        return NoiseConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
