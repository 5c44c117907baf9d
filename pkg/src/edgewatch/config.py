"""Scenario configuration: strict TOML parsing, canonical serialization,
and instance construction."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import tomli

from .errors import ConfigError
from .graphs import (
    DEFAULT_ENUMERATION_CAP,
    DefenderSpec,
    GameGraph,
    GameInstance,
    generate_graph,
    normalize_edge,
)
from .randomness import make_rng

_SENTINEL = object()


def _section(raw: dict, name: str, schema: dict, required: bool = False) -> dict:
    body = raw.get(name)
    if body is None:
        if required:
            raise ConfigError(f"missing required section [{name}]")
        body = {}
    if not isinstance(body, dict):
        raise ConfigError(f"[{name}] must be a table")
    unknown = set(body) - set(schema)
    if unknown:
        raise ConfigError(f"[{name}] has unknown keys: {sorted(unknown)}")
    out = {}
    for key, (kind, default) in schema.items():
        if key in body:
            value = body[key]
            if kind is float and isinstance(value, int) and not isinstance(value, bool):
                value = float(value)
            if kind is not None and not isinstance(value, kind):
                raise ConfigError(f"[{name}].{key} must be {getattr(kind, '__name__', kind)}")
            out[key] = value
        elif default is _SENTINEL:
            raise ConfigError(f"[{name}] is missing required key {key!r}")
        else:
            out[key] = default
    return out


_SCENARIO = {"name": (str, "unnamed"), "seed": (int, 3407)}
_GRAPH = {
    "kind": (str, "random"),
    "nodes": (int, 0),
    "edges": (int, 0),
    "rows": (int, 0),
    "cols": (int, 0),
    "path": (str, ""),
    "num_starts": (int, 1),
    "num_targets": (int, 1),
    "target_values": (list, [1.0]),
    "max_path_length": (int, 0),
    "path_count_min": (int, 0),
    "path_count_max": (int, 0),
    "seed": (int, 3407),
}
_DEFENDERS = {
    "count": (int, 1),
    "locations": (int, 0),
    "allow_duplicate_edges": (bool, True),
    "seed": (int, 3407),
    "candidates": (list, []),
}
_TRAIN = {
    "iterations": (int, 50_000),
    "batch_size": (int, 100),
    "learning_rate": (float, 1e-4),
    "tau": (float, 0.05),
    "epsilon": (float, 0.8),
    "update_rate": (float, 0.01),
    "lr_decay": (float, 0.8),
    "tau_decay": (float, 0.7),
    "ablate_prune": (bool, False),
    "log_prob_floor": (float, 1e-12),
    "optimizer": (str, "adam"),
    "policy_mode": (str, "network"),
    "epsilon_decay": (bool, False),
    "stop_at_gap": (float, 0.0),
}
_NAL = dict(_TRAIN)
_NAL.update(
    {
        "tau": (float, 0.1),
        "update_rate": (float, 0.1),
        "lr_decay": (float, 0.9),
        "tau_decay": (float, 0.9),
    }
)
_DO = {
    "max_iterations": (int, 500),
    "meta_tolerance": (float, 1e-6),
    "meta_max_iters": (int, 100_000),
    "br_tolerance": (float, 1e-9),
}
_EVAL = {
    "cadence": (int, 0),
    "enumeration_cap": (int, DEFAULT_ENUMERATION_CAP),
    "sample_budget": (int, 0),
    "rollouts": (int, 1000),
}
_OUTPUT = {"directory": (str, "runs")}

_SCHEMA = {
    "scenario": _SCENARIO,
    "graph": _GRAPH,
    "defenders": _DEFENDERS,
    "tso": _TRAIN,
    "nal": _NAL,
    "double_oracle": _DO,
    "evaluation": _EVAL,
    "output": _OUTPUT,
}


@dataclass
class ScenarioConfig:
    """Fully validated scenario; every field has a concrete value."""

    scenario: dict
    graph: dict
    defenders: dict
    tso: dict
    nal: dict
    double_oracle: dict
    evaluation: dict
    output: dict

    def canonical(self) -> str:
        return canonical_toml(self)

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate scenario TOML; unknown sections or keys are
    rejected outright."""
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"TOML parse error: {exc}") from exc
    unknown = set(raw) - set(_SCHEMA)
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")
    cfg = ScenarioConfig(
        scenario=_section(raw, "scenario", _SCENARIO),
        graph=_section(raw, "graph", _GRAPH, required=True),
        defenders=_section(raw, "defenders", _DEFENDERS),
        tso=_section(raw, "tso", _TRAIN),
        nal=_section(raw, "nal", _NAL),
        double_oracle=_section(raw, "double_oracle", _DO),
        evaluation=_section(raw, "evaluation", _EVAL),
        output=_section(raw, "output", _OUTPUT),
    )
    _validate_graph_params(cfg.graph)
    return cfg


def load_config(path: str) -> ScenarioConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc


def _validate_graph_params(graph: dict) -> None:
    kind = graph["kind"]
    if kind == "random":
        if graph["nodes"] <= 0 or graph["edges"] <= 0:
            raise ConfigError("[graph] random generator needs nodes and edges")
    elif kind == "grid":
        if graph["rows"] <= 0 or graph["cols"] <= 0:
            raise ConfigError("[graph] grid generator needs rows and cols")
    elif kind == "file":
        if not graph["path"]:
            raise ConfigError("[graph] file source needs a path")
    else:
        raise ConfigError(f"[graph] unknown kind {kind!r}")
    if kind != "file" and graph["max_path_length"] <= 0:
        raise ConfigError("[graph] max_path_length must be positive")


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int,)):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, list):
        return "[" + ", ".join(_format_value(v) for v in value) + "]"
    raise ConfigError(f"cannot serialize {value!r}")


def canonical_toml(cfg: ScenarioConfig) -> str:
    """Deterministic serialization: schema section and key order, full
    precision floats.  parse(canonical(parse(text))) == parse(text)."""
    lines = []
    for section_name in _SCHEMA:
        body = getattr(cfg, section_name)
        lines.append(f"[{section_name}]")
        for key in _SCHEMA[section_name]:
            lines.append(f"{key} = {_format_value(body[key])}")
        lines.append("")
    return "\n".join(lines)


def build_graph(cfg: ScenarioConfig) -> GameGraph:
    g = cfg.graph
    params = {
        "num_starts": g["num_starts"],
        "num_targets": g["num_targets"],
        "target_values": g["target_values"]
        if len(g["target_values"]) != 1
        else g["target_values"][0],
        "max_path_length": g["max_path_length"],
    }
    if g["path_count_max"] > 0:
        params["path_count_range"] = [g["path_count_min"], g["path_count_max"]]
    if g["kind"] == "random":
        params.update(nodes=g["nodes"], edges=g["edges"])
    elif g["kind"] == "grid":
        params.update(rows=g["rows"], cols=g["cols"])
    else:
        params = {"path": g["path"]}
    return generate_graph(g["kind"], params, g["seed"])


def build_defenders(cfg: ScenarioConfig, graph: GameGraph) -> DefenderSpec:
    d = cfg.defenders
    if d["candidates"]:
        candidate_lists = [
            [normalize_edge(int(u), int(v)) for u, v in member]
            for member in d["candidates"]
        ]
        if len(candidate_lists) != d["count"]:
            raise ConfigError("[defenders] candidates length must equal count")
    else:
        if d["locations"] <= 0 or d["locations"] >= len(graph.edges):
            pool = list(graph.edges)
        else:
            rng = make_rng(d["seed"], 23)
            picks = rng.choice(len(graph.edges), size=d["locations"], replace=False)
            pool = [graph.edges[int(i)] for i in sorted(picks)]
        candidate_lists = [list(pool) for _ in range(d["count"])]
    return DefenderSpec(candidate_lists, allow_duplicate_edges=d["allow_duplicate_edges"])


def build_instance(cfg: ScenarioConfig) -> GameInstance:
    graph = build_graph(cfg)
    return GameInstance(graph, build_defenders(cfg, graph))
