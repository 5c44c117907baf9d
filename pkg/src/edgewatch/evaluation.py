"""Exact duality gaps on enumerable games and Monte-Carlo win-rate
matrices on games too large to enumerate."""

from __future__ import annotations

import csv
import io
from bisect import bisect_left
from dataclasses import dataclass

import numpy as np

from .errors import InstanceMismatchError, SchemaError
from .graphs import (
    DEFAULT_ENUMERATION_CAP,
    GameInstance,
    MixedStrategy,
    enumerate_attacker_actions,
    enumerate_defender_actions,
    normalize_edge,
    payoff_matrix,
)
from .policies import TreePolicy
from .randomness import UniformSource, make_rng


def duality_gap(att: MixedStrategy, dfn: MixedStrategy, payoff: np.ndarray) -> float:
    """Total exploitability: each player's best pure deviation value minus
    its current value, summed.  Zero exactly at a Nash equilibrium."""
    x = att.probabilities if isinstance(att, MixedStrategy) else np.asarray(att, dtype=np.float64)
    y = dfn.probabilities if isinstance(dfn, MixedStrategy) else np.asarray(dfn, dtype=np.float64)
    if payoff.shape != (len(x), len(y)):
        raise InstanceMismatchError(
            f"payoff shape {payoff.shape} does not match ({len(x)}, {len(y)})"
        )
    against_def = payoff @ y
    against_att = x @ payoff
    value = float(x @ against_def)
    attacker_term = float(against_def.max()) - value
    defender_term = value - float(against_att.min())
    return attacker_term + defender_term


def extract_mixed_strategy(policy: TreePolicy, actions: list) -> MixedStrategy:
    """Explicit action distribution of a tree policy over an enumerated
    action list, via the chain rule along each action's walk."""
    probs = np.empty(len(actions), dtype=np.float64)
    for i, action in enumerate(actions):
        items = policy.view.action_items(action)
        probs[i] = policy.action_steps(items)[0]
    total = float(probs.sum())
    if abs(total - 1.0) > 1e-8:
        raise InstanceMismatchError(
            f"extracted strategy sums to {total!r}; tree and enumeration disagree"
        )
    return MixedStrategy(probs / total)


class GapEvaluator:
    """Caches enumerations and the payoff matrix of an enumerable instance
    so duality gaps can be recomputed cheaply during training."""

    def __init__(self, instance: GameInstance, cap: int = DEFAULT_ENUMERATION_CAP):
        self.instance = instance
        self.attacker_actions = enumerate_attacker_actions(instance.graph, cap=cap)
        self.defender_actions = enumerate_defender_actions(instance.defenders, cap=cap)
        self.payoff = payoff_matrix(
            instance.graph, self.attacker_actions, self.defender_actions
        )

    def gap(self, att: MixedStrategy, dfn: MixedStrategy) -> float:
        return duality_gap(att, dfn, self.payoff)

    def gap_of_policies(self, policies: dict) -> float:
        x = extract_mixed_strategy(policies["attacker"], self.attacker_actions)
        y = extract_mixed_strategy(policies["defender"], self.defender_actions)
        return self.gap(x, y)


# -- win-rate matrices -------------------------------------------------------


@dataclass
class WinRateMatrix:
    """Attacker success rates per policy matchup."""

    attacker_labels: list[str]
    defender_labels: list[str]
    rates: np.ndarray
    rollouts_per_cell: int

    def __post_init__(self) -> None:
        self.rates = np.asarray(self.rates, dtype=np.float64)
        if self.rates.shape != (len(self.attacker_labels), len(self.defender_labels)):
            raise SchemaError("win-rate matrix shape does not match its labels")
        if np.any(self.rates < 0.0) or np.any(self.rates > 1.0):
            raise SchemaError("win rates must lie in [0, 1]")


class PolicySampler:
    """Adapter drawing pure actions from a tree policy."""

    def __init__(self, policy: TreePolicy):
        self.policy = policy

    def sample(self, uniforms: UniformSource) -> tuple:
        return self.policy.sample_walk(uniforms, 0.0)[0]


class StrategySampler:
    """Adapter drawing pure actions from an explicit mixed strategy."""

    def __init__(self, actions: list, strategy: MixedStrategy):
        self.items = [
            tuple(a.path) if hasattr(a, "path") else tuple(a.edges) for a in actions
        ]
        cum = np.cumsum(strategy.probabilities)
        cum[-1] = 1.0
        self.cum = cum.tolist()

    def sample(self, uniforms: UniformSource) -> tuple:
        return self.items[bisect_left(self.cum, uniforms.next())]


def win_rate_matrix(
    instance: GameInstance,
    attacker_policies: dict,
    defender_policies: dict,
    rollouts: int = 1000,
    seed: int = 0,
) -> WinRateMatrix:
    """Simulate every attacker/defender matchup for ``rollouts`` games and
    record the attacker's success rate (no edge of the defender draw on the
    sampled path).  Each cell runs on its own derived seed, so results do
    not depend on evaluation order."""
    att_labels = list(attacker_policies)
    def_labels = list(defender_policies)
    rates = np.zeros((len(att_labels), len(def_labels)))
    for i, a_label in enumerate(att_labels):
        for j, d_label in enumerate(def_labels):
            uniforms = UniformSource(make_rng(seed, 211, i, j))
            attacker = attacker_policies[a_label]
            defender = defender_policies[d_label]
            wins = 0
            for _ in range(rollouts):
                path = attacker.sample(uniforms)
                placed = defender.sample(uniforms)
                path_edges = {
                    normalize_edge(path[k], path[k + 1]) for k in range(len(path) - 1)
                }
                if not any(e in path_edges for e in placed):
                    wins += 1
            rates[i, j] = wins / rollouts
    return WinRateMatrix(att_labels, def_labels, rates, rollouts)


def write_win_rate_csv(matrix: WinRateMatrix) -> str:
    lines = ["," + ",".join(matrix.defender_labels)]
    for label, row in zip(matrix.attacker_labels, matrix.rates):
        lines.append(label + "," + ",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def validate_win_rate_csv(text: str, rollouts_per_cell: int = 0) -> WinRateMatrix:
    """Parse a win-rate CSV; raises :class:`SchemaError` with the offending
    line number on malformed rows or out-of-range rates."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("empty file", line=1) from None
    if len(header) < 2 or header[0] != "":
        raise SchemaError("header must start with an empty cell then labels", line=1)
    def_labels = header[1:]
    att_labels = []
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != len(def_labels) + 1:
            raise SchemaError(
                f"expected {len(def_labels) + 1} fields, got {len(rec)}", line=lineno
            )
        att_labels.append(rec[0])
        try:
            vals = [float(v) for v in rec[1:]]
        except ValueError as exc:
            raise SchemaError(str(exc), line=lineno) from exc
        if any(v < 0.0 or v > 1.0 for v in vals):
            raise SchemaError("rate outside [0, 1]", line=lineno)
        rows.append(vals)
    if not rows:
        raise SchemaError("no data rows", line=2)
    return WinRateMatrix(att_labels, def_labels, np.asarray(rows), rollouts_per_cell)
