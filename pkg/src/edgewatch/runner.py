"""Run orchestration: build the instance, run one algorithm, persist
metrics, checkpoints and a manifest."""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .config import ScenarioConfig, build_instance
from .double_oracle import DoubleOracleSolver
from .errors import CheckpointError, EdgewatchError
from .evaluation import (
    GapEvaluator,
    PolicySampler,
    StrategySampler,
    WinRateMatrix,
    extract_mixed_strategy,
    win_rate_matrix,
    write_win_rate_csv,
)
from .flat_solver import FlatSolver
from .graphs import GameInstance, MixedStrategy
from .policies import TreePolicy, load_policy, save_policy
from .trees import AttackerTreeView, DefenderTreeView
from .training import TreeSolver

MANIFEST_SCHEMA = "edgewatch-manifest-v1"
FLAT_SCHEMA = "edgewatch-flat-v1"
MIXED_SCHEMA = "edgewatch-mixed-v1"

#: Sensitivity grid: entropy weight, decay interval rate, decay weight.
SWEEP_TAUS = (0.2, 0.1, 0.05)
SWEEP_UPDATE_RATES = (0.1, 0.05, 0.025)
SWEEP_WEIGHTS = (0.9, 0.7, 0.5)


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_mixed_strategy(path: str, probabilities, fingerprint: str, player: str) -> None:
    _write_json(
        path,
        {
            "schema": MIXED_SCHEMA,
            "fingerprint": fingerprint,
            "player": player,
            "probabilities": [float(p) for p in probabilities],
        },
    )


def save_flat_strategy(path: str, logits, fingerprint: str, player: str) -> None:
    _write_json(
        path,
        {
            "schema": FLAT_SCHEMA,
            "fingerprint": fingerprint,
            "player": player,
            "logits": [float(v) for v in logits],
        },
    )


def _solver_for(config: ScenarioConfig, algorithm: str, seed: int, ablate: bool | None):
    ev = config.evaluation
    budget = ev["sample_budget"] or None
    cadence = ev["cadence"] or None
    cap = ev["enumeration_cap"]
    if algorithm == "tso":
        t = config.tso
        return TreeSolver(
            iterations=t["iterations"],
            batch_size=t["batch_size"],
            learning_rate=t["learning_rate"],
            tau=t["tau"],
            epsilon=t["epsilon"],
            update_rate=t["update_rate"],
            lr_decay=t["lr_decay"],
            tau_decay=t["tau_decay"],
            ablate_prune=t["ablate_prune"] if ablate is None else ablate,
            log_prob_floor=t["log_prob_floor"],
            optimizer=t["optimizer"],
            policy_mode=t["policy_mode"],
            epsilon_decay=t["epsilon_decay"],
            eval_cadence=cadence,
            sample_budget=budget,
            stop_at_gap=t["stop_at_gap"] or None,
            enumeration_cap=cap,
            seed=seed,
        )
    if algorithm == "nal":
        t = config.nal
        return FlatSolver(
            iterations=t["iterations"],
            batch_size=t["batch_size"],
            learning_rate=t["learning_rate"],
            tau=t["tau"],
            epsilon=t["epsilon"],
            update_rate=t["update_rate"],
            lr_decay=t["lr_decay"],
            tau_decay=t["tau_decay"],
            ablate_prune=t["ablate_prune"] if ablate is None else ablate,
            log_prob_floor=t["log_prob_floor"],
            optimizer=t["optimizer"],
            eval_cadence=cadence,
            sample_budget=budget,
            stop_at_gap=t["stop_at_gap"] or None,
            enumeration_cap=cap,
            seed=seed,
        )
    if algorithm == "do":
        d = config.double_oracle
        return DoubleOracleSolver(
            max_iterations=d["max_iterations"],
            meta_tolerance=d["meta_tolerance"],
            meta_max_iters=d["meta_max_iters"],
            br_tolerance=d["br_tolerance"],
            sample_budget=budget,
            enumeration_cap=cap,
            seed=seed,
        )
    raise EdgewatchError(f"unknown algorithm {algorithm!r}")


def run_experiment(
    config: ScenarioConfig,
    algorithm: str,
    out_dir: str,
    seed: int | None = None,
    ablate: bool | None = None,
    run_name: str | None = None,
) -> dict:
    """Execute one algorithm on the configured scenario and persist the
    metrics CSV (samples-keyed), policy checkpoints, the canonical config
    and a manifest.  Returns the manifest dict."""
    seed = config.scenario["seed"] if seed is None else seed
    name = run_name or f"{config.scenario['name']}-{algorithm}-s{seed}"
    run_dir = os.path.join(out_dir, name)
    os.makedirs(run_dir, exist_ok=True)
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "name": name,
        "algorithm": algorithm,
        "seed": seed,
        "config_sha256": config.sha256(),
        "version": f"edgewatch-{__version__}",
        "status": "failed",
        "outputs": {},
    }
    started = time.monotonic()
    try:
        with open(os.path.join(run_dir, "config.canonical.toml"), "w", encoding="utf-8") as fh:
            fh.write(config.canonical())
        instance = build_instance(config)
        manifest["instance_fingerprint"] = instance.fingerprint()
        solver = _solver_for(config, algorithm, seed, ablate)
        solver.fit(instance)
        metrics_path = os.path.join(run_dir, "metrics.csv")
        solver.metrics_.write(metrics_path)
        manifest["outputs"]["metrics"] = metrics_path
        _save_checkpoints(solver, algorithm, instance, run_dir, manifest)
        manifest["samples_consumed"] = int(solver.samples_consumed_)
        gap = getattr(solver, "duality_gap_", None)
        manifest["final_duality_gap"] = None if gap is None else float(gap)
        manifest["status"] = "ok"
        return manifest
    finally:
        manifest["wallclock_ms"] = round((time.monotonic() - started) * 1000.0, 3)
        _write_json(os.path.join(run_dir, "manifest.json"), manifest)


def _save_checkpoints(solver, algorithm: str, instance: GameInstance, run_dir: str, manifest: dict) -> None:
    fp = instance.fingerprint()
    if algorithm == "tso":
        for player, policy in (
            ("attacker", solver.attacker_policy_),
            ("defender", solver.defender_policy_),
        ):
            path = os.path.join(run_dir, f"{player}_policy.json")
            save_policy(policy, path, fp)
            manifest["outputs"][f"{player}_policy"] = path
    elif algorithm == "nal":
        for player, strategy in (
            ("attacker", solver.attacker_strategy_),
            ("defender", solver.defender_strategy_),
        ):
            path = os.path.join(run_dir, f"{player}_strategy.json")
            save_flat_strategy(path, strategy.logits, fp, player)
            manifest["outputs"][f"{player}_strategy"] = path
    elif algorithm == "do":
        for player, strategy in (
            ("attacker", solver.attacker_strategy_),
            ("defender", solver.defender_strategy_),
        ):
            path = os.path.join(run_dir, f"{player}_strategy.json")
            save_mixed_strategy(path, strategy.probabilities, fp, player)
            manifest["outputs"][f"{player}_strategy"] = path
        pools_path = os.path.join(run_dir, "pools.json")
        _write_json(
            pools_path,
            {
                "schema": "edgewatch-pools-v1",
                "iterations": [
                    {
                        "iteration": snap.iteration,
                        "attacker_pool": [
                            list(solver.attacker_actions_[i].path)
                            for i in snap.attacker_pool
                        ],
                        "defender_pool": [
                            [list(e) for e in solver.defender_actions_[j].edges]
                            for j in snap.defender_pool
                        ],
                        "duality_gap": snap.duality_gap,
                        "samples": snap.samples,
                    }
                    for snap in solver.pools_
                ],
            },
        )
        manifest["outputs"]["pools"] = pools_path


def run_ablation(config: ScenarioConfig, out_dir: str, seed: int | None = None) -> dict:
    """Paired tree-solver runs differing only in the prune switch."""
    base = config.scenario["name"]
    seed = config.scenario["seed"] if seed is None else seed
    with_prune = run_experiment(
        config, "tso", out_dir, seed=seed, ablate=False, run_name=f"{base}-tso-prune-s{seed}"
    )
    without = run_experiment(
        config, "tso", out_dir, seed=seed, ablate=True, run_name=f"{base}-tso-noprune-s{seed}"
    )
    summary = {
        "schema": "edgewatch-ablation-v1",
        "with_prune": with_prune,
        "without_prune": without,
    }
    _write_json(os.path.join(out_dir, f"{base}-ablation-s{seed}.json"), summary)
    return summary


def _sweep_one(args: tuple) -> dict:
    canonical, tau, update_rate, weight, out_dir, seed = args
    from .config import parse_config
    from .metrics import read_metrics_csv

    cfg = parse_config(canonical)
    cfg.tso["tau"] = tau
    cfg.tso["update_rate"] = update_rate
    cfg.tso["tau_decay"] = weight
    name = f"sweep-tau{tau}-ur{update_rate}-w{weight}"
    manifest = run_experiment(cfg, "tso", out_dir, seed=seed, run_name=name)
    gaps = [
        r.duality_gap
        for r in read_metrics_csv(manifest["outputs"]["metrics"])
        if r.duality_gap is not None
    ]
    return {
        "tau": tau,
        "update_rate": update_rate,
        "tau_decay": weight,
        "final_gap": manifest.get("final_duality_gap"),
        "best_gap": min(gaps) if gaps else None,
        "samples": manifest.get("samples_consumed"),
    }


def run_sweep(
    config: ScenarioConfig,
    out_dir: str,
    seed: int | None = None,
    threads: int = 1,
) -> list[dict]:
    """Grid sweep over entropy weight, decay interval and decay weight;
    one metrics CSV per combination plus a summary CSV."""
    seed = config.scenario["seed"] if seed is None else seed
    canonical = config.canonical()
    combos = [
        (canonical, tau, ur, w, out_dir, seed)
        for tau in SWEEP_TAUS
        for ur in SWEEP_UPDATE_RATES
        for w in SWEEP_WEIGHTS
    ]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_sweep_one, combos))
    else:
        results = [_sweep_one(c) for c in combos]
    lines = ["tau,update_rate,tau_decay,final_gap,best_gap,samples"]
    for r in results:
        lines.append(
            f"{r['tau']!r},{r['update_rate']!r},{r['tau_decay']!r},"
            f"{'' if r['final_gap'] is None else repr(float(r['final_gap']))},"
            f"{'' if r['best_gap'] is None else repr(float(r['best_gap']))},"
            f"{r['samples']}"
        )
    with open(os.path.join(out_dir, "sweep_summary.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return results


# -- win-rate evaluation -------------------------------------------------------


def _sampler_from_source(source: str, side: str, instance: GameInstance, cap: int):
    """Build an action sampler from 'uniform' or a checkpoint path."""
    view = (
        AttackerTreeView(instance.graph)
        if side == "attacker"
        else DefenderTreeView(instance.defenders)
    )
    if source == "uniform":
        return PolicySampler(TreePolicy(view, mode="tabular", seed=0))
    with open(source, encoding="utf-8") as fh:
        payload = json.load(fh)
    schema = payload.get("schema")
    fp = instance.fingerprint()
    if schema == "edgewatch-policy-v1":
        return PolicySampler(load_policy(source, view, fp))
    if payload.get("fingerprint") != fp:
        raise CheckpointError(f"{source}: checkpoint belongs to another instance")
    from .graphs import enumerate_attacker_actions, enumerate_defender_actions

    actions = (
        enumerate_attacker_actions(instance.graph, cap=cap)
        if side == "attacker"
        else enumerate_defender_actions(instance.defenders, cap=cap)
    )
    if schema == FLAT_SCHEMA:
        logits = np.asarray(payload["logits"], dtype=np.float64)
        z = np.exp(logits - logits.max())
        return StrategySampler(actions, MixedStrategy(z / z.sum()))
    if schema == MIXED_SCHEMA:
        return StrategySampler(
            actions, MixedStrategy(np.asarray(payload["probabilities"], dtype=np.float64))
        )
    raise CheckpointError(f"{source}: unknown checkpoint schema {schema!r}")


def run_winrate(
    config: ScenarioConfig,
    attacker_sources: list[tuple[str, str]],
    defender_sources: list[tuple[str, str]],
    out_path: str,
    rollouts: int | None = None,
    seed: int | None = None,
    include_uniform: bool = False,
) -> WinRateMatrix:
    """Evaluate a win-rate matrix between labeled policy sources
    ('uniform' or checkpoint paths) and write it as CSV."""
    instance = build_instance(config)
    cap = config.evaluation["enumeration_cap"]
    rollouts = rollouts if rollouts is not None else config.evaluation["rollouts"]
    seed = config.scenario["seed"] if seed is None else seed
    att = {label: _sampler_from_source(src, "attacker", instance, cap) for label, src in attacker_sources}
    dfn = {label: _sampler_from_source(src, "defender", instance, cap) for label, src in defender_sources}
    if include_uniform:
        att.setdefault("uniform", _sampler_from_source("uniform", "attacker", instance, cap))
        dfn.setdefault("uniform", _sampler_from_source("uniform", "defender", instance, cap))
    matrix = win_rate_matrix(instance, att, dfn, rollouts=rollouts, seed=seed)
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(write_win_rate_csv(matrix))
    return matrix


def run_eval_gap(
    config: ScenarioConfig,
    attacker_source: str,
    defender_source: str,
    out_path: str | None = None,
) -> float:
    """Exact duality gap of two checkpointed policies on an enumerable
    instance; refuses (enumeration overflow) past the cap."""
    instance = build_instance(config)
    cap = config.evaluation["enumeration_cap"]
    evaluator = GapEvaluator(instance, cap=cap)
    fp = instance.fingerprint()
    strategies = {}
    for side, source, actions, view in (
        ("attacker", attacker_source, evaluator.attacker_actions, AttackerTreeView(instance.graph)),
        ("defender", defender_source, evaluator.defender_actions, DefenderTreeView(instance.defenders)),
    ):
        if source == "uniform":
            strategies[side] = extract_mixed_strategy(TreePolicy(view, seed=0), actions)
            continue
        with open(source, encoding="utf-8") as fh:
            payload = json.load(fh)
        schema = payload.get("schema")
        if schema == "edgewatch-policy-v1":
            strategies[side] = extract_mixed_strategy(load_policy(source, view, fp), actions)
            continue
        if payload.get("fingerprint") != fp:
            raise CheckpointError(f"{source}: checkpoint belongs to another instance")
        if schema == FLAT_SCHEMA:
            logits = np.asarray(payload["logits"], dtype=np.float64)
            z = np.exp(logits - logits.max())
            strategies[side] = MixedStrategy(z / z.sum())
        elif schema == MIXED_SCHEMA:
            strategies[side] = MixedStrategy(
                np.asarray(payload["probabilities"], dtype=np.float64)
            )
        else:
            raise CheckpointError(f"{source}: unknown checkpoint schema {schema!r}")
    gap = evaluator.gap(strategies["attacker"], strategies["defender"])
    if out_path:
        _write_json(out_path, {"duality_gap": gap})
    return gap
