"""Configuration file loading with unit conversion and overrides.

File keys carry explicit units (kb, megacycles, ghz, mhz, dbm, ms); the
loader converts them to the canonical units of :class:`SystemConfig`.
"""

from __future__ import annotations

import copy
import hashlib
import json
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .model import ChannelModel, ModelError, SystemConfig

__all__ = [
    "ConfigError",
    "default_config_dict",
    "load_config_dict",
    "apply_overrides",
    "build_from_dict",
    "load_config",
    "config_digest",
]

BITS_PER_KB = 8000.0  # 1 KB = 1000 bytes

_SCALAR_KEYS = {
    "input_size_kb",
    "cycles_megacycles",
    "local_freq_ghz",
    "edge_freq_ghz",
    "bandwidth_mhz",
    "distance_km",
    "tx_power_dbm",
    "noise_power_dbm",
    "t_min_ms",
    "perturbation",
    "step_factor",
    "stop_tol",
    "max_outer_iters",
}
_LIST_KEYS = {"wait_grid_ms"}
_CHANNEL_KEYS = {"labels", "tx_times_ms", "transition"}


class ConfigError(ValueError):
    """Malformed configuration file or override."""


def default_config_dict() -> dict[str, Any]:
    """The bundled default scenario as a plain dict."""
    text = resources.files("aopsolver.data").joinpath("default.yaml").read_text()
    return yaml.safe_load(text)


def load_config_dict(path: "str | Path | None") -> dict[str, Any]:
    """Read a YAML config file, or the bundled default when path is None."""
    if path is None:
        return default_config_dict()
    try:
        raw = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    data = yaml.safe_load(raw)
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must contain a mapping")
    return data


def _validate_keys(data: dict[str, Any]) -> None:
    known = _SCALAR_KEYS | _LIST_KEYS | {"channel"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    missing = (_SCALAR_KEYS | _LIST_KEYS | {"channel"}) - set(data) - {"perturbation",
                                                                       "step_factor",
                                                                       "stop_tol",
                                                                       "max_outer_iters"}
    if missing:
        raise ConfigError(f"missing config keys: {sorted(missing)}")
    channel = data["channel"]
    if not isinstance(channel, dict):
        raise ConfigError("channel must be a mapping")
    unknown = set(channel) - _CHANNEL_KEYS
    if unknown:
        raise ConfigError(f"unknown channel keys: {sorted(unknown)}")
    for key in ("tx_times_ms", "transition"):
        if key not in channel:
            raise ConfigError(f"missing channel key: {key}")


def apply_overrides(data: dict[str, Any], overrides: "list[str] | None") -> dict[str, Any]:
    """Apply KEY=VALUE overrides; dotted keys reach into the channel block.

    Values are parsed as YAML, so lists and numbers work unquoted, e.g.
    ``cycles_megacycles=2000`` or ``channel.tx_times_ms=[500,1000,2000]``.
    """
    if not overrides:
        return data
    data = copy.deepcopy(data)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form KEY=VALUE")
        key, _, raw_value = item.partition("=")
        key = key.strip()
        try:
            value = yaml.safe_load(raw_value)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse override value {raw_value!r}: {exc}") from exc
        parts = key.split(".")
        target: dict[str, Any] = data
        for part in parts[:-1]:
            if part not in target or not isinstance(target[part], dict):
                raise ConfigError(f"override {key!r} does not match a config section")
            target = target[part]
        leaf = parts[-1]
        valid = _CHANNEL_KEYS if target is not data else (_SCALAR_KEYS | _LIST_KEYS | {"channel"})
        if leaf not in valid:
            raise ConfigError(f"override {key!r} does not name a known config key")
        target[leaf] = value
    return data


def build_from_dict(data: dict[str, Any]) -> tuple[SystemConfig, ChannelModel]:
    """Convert a validated config dict into model objects."""
    _validate_keys(data)
    try:
        cfg = SystemConfig(
            input_size_bits=float(data["input_size_kb"]) * BITS_PER_KB,
            cycles=float(data["cycles_megacycles"]) * 1e6,
            local_freq_hz=float(data["local_freq_ghz"]) * 1e9,
            edge_freq_hz=float(data["edge_freq_ghz"]) * 1e9,
            bandwidth_hz=float(data["bandwidth_mhz"]) * 1e6,
            distance_km=float(data["distance_km"]),
            tx_power_dbm=float(data["tx_power_dbm"]),
            noise_power_dbm=float(data["noise_power_dbm"]),
            wait_grid_ms=tuple(float(z) for z in data["wait_grid_ms"]),
            t_min_ms=float(data["t_min_ms"]),
            perturbation=float(data.get("perturbation", 3e-5)),
            step_factor=float(data.get("step_factor", 1e-3)),
            stop_tol=float(data.get("stop_tol", 1e-4)),
            max_outer_iters=int(data.get("max_outer_iters", 100_000)),
        )
        channel = data["channel"]
        chan = ChannelModel.from_tx_times(
            tx_times_ms=tuple(float(t) for t in channel["tx_times_ms"]),
            transition=channel["transition"],
            labels=channel.get("labels"),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ModelError):
            raise
        raise ConfigError(f"malformed config value: {exc}") from exc
    return cfg, chan


def load_config(
    path: "str | Path | None" = None,
    overrides: "list[str] | None" = None,
) -> tuple[SystemConfig, ChannelModel, dict[str, Any]]:
    """Load, override and build a configuration.

    Returns the model objects plus the resolved dict (used for manifests).
    """
    data = apply_overrides(load_config_dict(path), overrides)
    cfg, chan = build_from_dict(data)
    return cfg, chan, data


def config_digest(data: dict[str, Any]) -> str:
    """Stable sha256 of a resolved config dict."""
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()
