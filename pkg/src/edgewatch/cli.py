"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 runtime abort.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import ScenarioConfig, build_graph, load_config
from .errors import ConfigError, EdgewatchError
from .graphs import write_graph_file
from .presets import load_preset, preset_rows
from .runner import (
    run_ablation,
    run_eval_gap,
    run_experiment,
    run_sweep,
    run_winrate,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="scenario TOML path")
    p.add_argument("--preset", help="shipped preset name (see `presets`)")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--out", default="runs", help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker cap for parallel stages")


def _load(args) -> ScenarioConfig:
    if args.config and args.preset:
        raise ConfigError("give either --config or --preset, not both")
    if args.config:
        return load_config(args.config)
    if args.preset:
        return load_preset(args.preset)
    raise ConfigError("a --config file or --preset name is required")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgewatch",
        description="Solver workbench for edge-interception security games.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-graph", help="generate a graph and write the text format")
    _add_common(p)
    p.add_argument("--graph-out", default=None, help="output graph file path")

    for cmd, txt in (
        ("train-tso", "train the tree-factored stochastic solver"),
        ("train-nal", "train the flat enumerated baseline"),
        ("run-do", "run the exact double-oracle baseline"),
    ):
        p = sub.add_parser(cmd, help=txt)
        _add_common(p)

    p = sub.add_parser("eval-gap", help="exact duality gap of two checkpoints")
    _add_common(p)
    p.add_argument("--attacker", required=True, help="checkpoint path or 'uniform'")
    p.add_argument("--defender", required=True, help="checkpoint path or 'uniform'")

    p = sub.add_parser("eval-winrate", help="Monte-Carlo win-rate matrix")
    _add_common(p)
    p.add_argument(
        "--attacker",
        action="append",
        default=[],
        metavar="LABEL=SOURCE",
        help="labeled attacker source (checkpoint path or 'uniform'); repeatable",
    )
    p.add_argument(
        "--defender",
        action="append",
        default=[],
        metavar="LABEL=SOURCE",
        help="labeled defender source; repeatable",
    )
    p.add_argument("--rollouts", type=int, default=None)
    p.add_argument("--include-uniform", action="store_true")

    p = sub.add_parser("ablate-sp", help="paired runs with and without the prune step")
    _add_common(p)

    p = sub.add_parser("sweep", help="grid sweep over tau, decay interval and weight")
    _add_common(p)

    sub.add_parser("presets", help="list shipped scenario presets")
    return parser


def _parse_labeled(entries: list[str]) -> list[tuple[str, str]]:
    out = []
    for entry in entries:
        label, sep, source = entry.partition("=")
        if not sep or not label or not source:
            raise ConfigError(f"expected LABEL=SOURCE, got {entry!r}")
        out.append((label, source))
    return out


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "presets":
            for row in preset_rows():
                print(row)
            return EXIT_OK
        config = _load(args)
        if args.command == "gen-graph":
            graph = build_graph(config)
            path = args.graph_out or f"{config.scenario['name']}.graph"
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(write_graph_file(graph))
            print(path)
            return EXIT_OK
        if args.command in ("train-tso", "train-nal", "run-do"):
            algorithm = {"train-tso": "tso", "train-nal": "nal", "run-do": "do"}[args.command]
            manifest = run_experiment(config, algorithm, args.out, seed=args.seed)
            print(manifest["outputs"]["metrics"])
            return EXIT_OK
        if args.command == "eval-gap":
            gap = run_eval_gap(config, args.attacker, args.defender)
            print(repr(gap))
            return EXIT_OK
        if args.command == "eval-winrate":
            attackers = _parse_labeled(args.attacker) or [("uniform", "uniform")]
            defenders = _parse_labeled(args.defender) or [("uniform", "uniform")]
            out_path = f"{args.out.rstrip('/')}/winrate.csv"
            os.makedirs(args.out, exist_ok=True)
            run_winrate(
                config,
                attackers,
                defenders,
                out_path,
                rollouts=args.rollouts,
                seed=args.seed,
                include_uniform=args.include_uniform,
            )
            print(out_path)
            return EXIT_OK
        if args.command == "ablate-sp":
            summary = run_ablation(config, args.out, seed=args.seed)
            print(summary["with_prune"]["outputs"]["metrics"])
            print(summary["without_prune"]["outputs"]["metrics"])
            return EXIT_OK
        if args.command == "sweep":
            results = run_sweep(config, args.out, seed=args.seed, threads=args.threads)
            print(f"{args.out.rstrip('/')}/sweep_summary.csv ({len(results)} runs)")
            return EXIT_OK
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EdgewatchError as exc:
        print(f"runtime abort: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"runtime abort: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
