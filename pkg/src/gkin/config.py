"""INI-style run configuration.

Four sections, all optional, every key optional (missing keys take the
documented defaults, an empty or absent file yields the default run):

    [simulation]  dimension, alpha, mu, rho0, n_particles, dt (number or
                  "auto"), t_end, seed, d3_pairs
    [kernel]      variant (hard_sphere | truncated | none), floor, cap
    [init]        kind (maxwellian | uniform_ball | two_delta |
                  pareto_tail), temperature, radius, point_a, point_b
                  (comma-separated), tail_index, scale, center
    [output]      interval, entropy

Unknown sections or keys, and values outside their documented ranges,
raise ConfigError naming the offending key.
"""

from __future__ import annotations

import configparser
import dataclasses
import os

from .engine import InitSpec, KernelSpec, SimConfig
from .errors import ConfigError, InvalidParameterError

_SCHEMA = {
    "simulation": {"dimension": int, "alpha": float, "mu": float,
                   "rho0": float, "n_particles": int, "dt": "auto_float",
                   "t_end": float, "seed": int, "d3_pairs": int},
    "kernel": {"variant": str, "floor": float, "cap": float},
    "init": {"kind": str, "temperature": float, "radius": float,
             "point_a": "floats", "point_b": "floats",
             "tail_index": float, "scale": float, "center": bool},
    "output": {"interval": float, "entropy": bool},
}

_BOOL = {"1": True, "yes": True, "true": True, "on": True,
         "0": False, "no": False, "false": False, "off": False}


def _convert(section: str, key: str, raw: str):
    kind = _SCHEMA[section][key]
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is bool:
            return _BOOL[raw.strip().lower()]
        if kind == "auto_float":
            return None if raw.strip().lower() == "auto" else float(raw)
        if kind == "floats":
            return tuple(float(tok) for tok in raw.split(","))
        return raw.strip()
    except (ValueError, KeyError):
        raise ConfigError(
            f"[{section}] {key}: cannot parse {raw!r} as {kind if isinstance(kind, str) else kind.__name__}")


def _read_sections(path) -> dict:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    except (configparser.Error, UnicodeDecodeError) as exc:
        raise ConfigError(f"malformed config {path}: {exc}")

    values = {name: {} for name in _SCHEMA}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(
                f"unknown section [{section}]; expected one of "
                f"{', '.join(_SCHEMA)}")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(
                    f"unknown key {key!r} in [{section}]; expected one of "
                    f"{', '.join(_SCHEMA[section])}")
            values[section][key] = _convert(section, key, raw)
    return values


def parse_config(path) -> SimConfig:
    """Parse and validate a config file into a SimConfig."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    values = _read_sections(path)
    sim = values["simulation"]
    out = values["output"]
    if "interval" in out:
        sim["output_interval"] = out.pop("interval")
    if "entropy" in out:
        sim["track_entropy"] = out.pop("entropy")
    try:
        kernel = KernelSpec(**values["kernel"])
        init = InitSpec(**values["init"])
        return SimConfig(kernel=kernel, init=init, **sim)
    except InvalidParameterError as exc:
        raise ConfigError(str(exc))


def apply_overrides(cfg: SimConfig, **overrides) -> SimConfig:
    """Replace top-level SimConfig fields; None values are ignored."""
    updates = {k: v for k, v in overrides.items() if v is not None}
    if not updates:
        return cfg
    try:
        return dataclasses.replace(cfg, **updates)
    except InvalidParameterError as exc:
        raise ConfigError(str(exc))


def default_config() -> SimConfig:
    return SimConfig()
