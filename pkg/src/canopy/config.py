"""Engine configuration: defaults, config-file section parsing, and flag
precedence (flags override file values, which override defaults)."""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from canopy.errors import ValidationError

ENV_CONFIG_VAR = "ENGINE_CONFIG"


@dataclass(frozen=True)
class EngineConfig:
    # [segmenter]
    eps1: float | None = None
    eps2: float | None = None
    delta_p: int = 1
    auto_calibrate: bool = True
    # [forest]
    fanout: int = 4
    # [search]
    tau_rel: float = 0.7
    use_reid: bool = True
    max_depth: int | None = None
    # the pipeline keeps the fallback on by default so full-miss queries
    # still surface their best evidence; bare search() defaults it off
    leaf_fallback: bool = True
    # agents
    video_filter: bool = True
    # [kb]
    c_max: int = 10
    tau_sim: float = 0.5
    tau_conf: int = 3
    # [provider]
    provider_mode: str = "mock"
    provider_address: str | None = None
    # [paths]
    forest_path: str = "forest.json"
    kb_path: str = "kb.jsonl"

    def __post_init__(self):
        if self.provider_mode not in ("mock", "subprocess", "http"):
            raise ValidationError(f"invalid provider mode {self.provider_mode!r}")
        if self.fanout < 2:
            raise ValidationError("fanout must be >= 2")
        if not (0.0 <= self.tau_rel <= 1.0):
            raise ValidationError("tau_rel must lie in [0,1]")


_SECTION_KEYS = {
    "segmenter": {"eps1": float, "eps2": float, "delta_p": int, "auto_calibrate": bool},
    "forest": {"fanout": int},
    "search": {
        "tau_rel": float,
        "use_reid": bool,
        "max_depth": int,
        "leaf_fallback": bool,
        "video_filter": bool,
    },
    "kb": {"c_max": int, "tau_sim": float, "tau_conf": int},
    "provider": {"provider_mode": str, "provider_address": str},
    "paths": {"forest_path": str, "kb_path": str},
}

# config-file key -> EngineConfig field, where names differ
_ALIASES = {
    ("provider", "mode"): "provider_mode",
    ("provider", "address"): "provider_address",
    ("paths", "forest"): "forest_path",
    ("paths", "kb"): "kb_path",
}


def _coerce(value: str, typ):
    if typ is bool:
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValidationError(f"invalid boolean {value!r}")
    try:
        return typ(value)
    except ValueError as exc:
        raise ValidationError(f"invalid value {value!r}: {exc}") from exc


def read_config_file(path: str | Path) -> dict:
    """Parse a sectioned key=value config file into EngineConfig overrides."""
    parser = configparser.ConfigParser()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config file {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ValidationError(f"malformed config file {path}: {exc}") from exc

    overrides: dict = {}
    for section in parser.sections():
        if section not in _SECTION_KEYS:
            raise ValidationError(f"unknown config section [{section}]")
        known = _SECTION_KEYS[section]
        for key, raw in parser.items(section):
            field_name = _ALIASES.get((section, key), key)
            if field_name not in known:
                raise ValidationError(f"unknown config key {key!r} in [{section}]")
            overrides[field_name] = _coerce(raw, known[field_name])
    return overrides


def resolve_config(
    config_path: str | Path | None = None,
    flag_overrides: dict | None = None,
) -> EngineConfig:
    """defaults < config file < CLI flags. The config path falls back to the
    ENGINE_CONFIG environment variable when not given."""
    cfg = EngineConfig()
    path = config_path or os.environ.get(ENV_CONFIG_VAR)
    if path:
        cfg = replace(cfg, **read_config_file(path))
    if flag_overrides:
        valid = {f.name for f in fields(EngineConfig)}
        unknown = set(flag_overrides) - valid
        if unknown:
            raise ValidationError(f"unknown config overrides {sorted(unknown)}")
        cfg = replace(cfg, **flag_overrides)
    return cfg
