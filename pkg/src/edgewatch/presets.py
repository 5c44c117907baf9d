"""Shipped scenario presets, one TOML file per shape."""

from __future__ import annotations

from importlib import resources

from .config import ScenarioConfig, parse_config
from .errors import ConfigError

PRESET_NAMES = ("s1", "m1", "m2", "m3", "m4", "l1", "m4small")


def preset_text(name: str) -> str:
    if name not in PRESET_NAMES:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}")
    return (
        resources.files("edgewatch").joinpath(f"presets/{name}.toml").read_text("utf-8")
    )


def load_preset(name: str) -> ScenarioConfig:
    return parse_config(preset_text(name))


def preset_rows() -> list[str]:
    """One summary line per preset for the CLI listing."""
    rows = []
    for name in PRESET_NAMES:
        cfg = load_preset(name)
        g, d = cfg.graph, cfg.defenders
        locations = d["locations"] if d["locations"] > 0 else g["edges"]
        rows.append(
            f"{name:<8} {g['nodes']:>6} nodes {g['edges']:>6} edges  "
            f"{g['num_targets']} target(s)  max-len {g['max_path_length']:>3}  "
            f"{d['count']} defender(s) x {locations} locations"
        )
    return rows
