"""Exact double-oracle baseline: brute-force best responses against the
current meta strategies, regret-matching on the growing restricted game.

Fair sample accounting: every payoff-matrix cell fill and every
best-response utility evaluation against a support atom is charged as one
simulator query, so curves align with the stochastic solvers on the
samples axis."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .errors import InstanceMismatchError
from .evaluation import duality_gap
from .graphs import (
    DEFAULT_ENUMERATION_CAP,
    GameInstance,
    MixedStrategy,
    enumerate_attacker_actions,
    enumerate_defender_actions,
    payoff_matrix,
)
from .metrics import MetricsLog, MetricsRow
from .randomness import make_rng


def best_response(payoff: np.ndarray, opponent: MixedStrategy | np.ndarray, side: str) -> tuple[int, float]:
    """Argmax pure response (ties to the lowest index) and its value for
    the responding side against an opponent mixed strategy."""
    y = opponent.probabilities if isinstance(opponent, MixedStrategy) else np.asarray(opponent)
    if side == "attacker":
        if payoff.shape[1] != len(y):
            raise InstanceMismatchError("opponent strategy does not match payoff columns")
        scores = payoff @ y
        idx = int(np.argmax(scores))
        return idx, float(scores[idx])
    if side == "defender":
        if payoff.shape[0] != len(y):
            raise InstanceMismatchError("opponent strategy does not match payoff rows")
        scores = y @ payoff
        idx = int(np.argmin(scores))
        return idx, float(-scores[idx])
    raise ValueError(f"unknown side {side!r}")


@dataclass
class RestrictedSolveInfo:
    converged: bool
    iterations: int
    gap: float


@dataclass
class RestrictedGame:
    """The matrix game over the current strategy pools."""

    attacker_pool: list[int]
    defender_pool: list[int]
    payoff: np.ndarray
    meta_strategies: tuple[MixedStrategy, MixedStrategy] | None = None


def _positive_part_strategy(regrets: np.ndarray) -> np.ndarray:
    pos = np.maximum(regrets, 0.0)
    total = pos.sum()
    if total <= 0.0:
        return np.full(len(regrets), 1.0 / len(regrets))
    return pos / total


def _lp_zero_sum(payoff: np.ndarray) -> tuple[np.ndarray, np.ndarray] | None:
    """Exact zero-sum matrix solve via two linear programs."""
    from scipy.optimize import linprog

    m, n = payoff.shape
    shift = float(payoff.min())
    a = payoff - shift + 1.0  # strictly positive payoffs
    # Attacker: max v st x A >= v, sum x = 1  <=>  min sum(u), u A >= 1.
    res_x = linprog(
        c=np.ones(m), A_ub=-a.T, b_ub=-np.ones(n), bounds=[(0, None)] * m, method="highs"
    )
    res_y = linprog(
        c=-np.ones(n), A_ub=a, b_ub=np.ones(m), bounds=[(0, None)] * n, method="highs"
    )
    if not (res_x.success and res_y.success):
        return None
    x = res_x.x / res_x.x.sum()
    y = res_y.x / res_y.x.sum()
    return x, y


def solve_restricted(
    payoff: np.ndarray,
    tolerance: float = 1e-6,
    max_iters: int = 100_000,
    check_interval: int = 250,
) -> tuple[MixedStrategy, MixedStrategy, RestrictedSolveInfo]:
    """Solve a zero-sum matrix game to the given exploitability tolerance.

    Regret-matching-plus self-play (alternating updates, iterate-weighted
    averaging) does the work; when its averaged profile stalls above the
    tolerance, one exact linear-programming polish finishes the job.  On
    total non-convergence the best averaged iterate seen is returned with
    ``converged=False``.
    """
    m, n = payoff.shape
    if m == 1 and n == 1:
        one = MixedStrategy(np.ones(1))
        return one, one, RestrictedSolveInfo(True, 0, 0.0)
    r_att = np.zeros(m)
    r_def = np.zeros(n)
    x_avg = np.zeros(m)
    y_avg = np.zeros(n)
    weight_sum = 0.0
    best: tuple[float, np.ndarray, np.ndarray] = (
        np.inf,
        np.full(m, 1.0 / m),
        np.full(n, 1.0 / n),
    )
    iters = 0
    stalled = False
    for t in range(1, max_iters + 1):
        iters = t
        x = _positive_part_strategy(r_att)
        # Defender regrets against the attacker's fresh strategy, baselined
        # on the defender's own current mix (alternating updates).
        y_cur = _positive_part_strategy(r_def)
        def_vals = -(x @ payoff)
        r_def += def_vals - float(def_vals @ y_cur)
        np.maximum(r_def, 0.0, out=r_def)
        y = _positive_part_strategy(r_def)
        att_vals = payoff @ y
        r_att += att_vals - float(x @ att_vals)
        np.maximum(r_att, 0.0, out=r_att)
        w = float(t)
        x_avg += w * x
        y_avg += w * y
        weight_sum += w
        if t % check_interval == 0 or t == max_iters:
            xa = x_avg / weight_sum
            ya = y_avg / weight_sum
            gap = float((payoff @ ya).max() - (xa @ payoff).min())
            improved = gap < 0.7 * best[0]
            if gap < best[0]:
                best = (gap, xa.copy(), ya.copy())
            if gap < tolerance:
                return (
                    MixedStrategy(xa / xa.sum()),
                    MixedStrategy(ya / ya.sum()),
                    RestrictedSolveInfo(True, t, gap),
                )
            if not improved and t >= 4 * check_interval:
                stalled = True
                break
    if stalled or best[0] >= tolerance:
        polished = _lp_zero_sum(payoff)
        if polished is not None:
            x, y = polished
            gap = float((payoff @ y).max() - (x @ payoff).min())
            if gap < best[0]:
                best = (gap, x, y)
    gap, xa, ya = best
    return (
        MixedStrategy(xa / xa.sum()),
        MixedStrategy(ya / ya.sum()),
        RestrictedSolveInfo(gap < tolerance, iters, gap),
    )


@dataclass
class PoolSnapshot:
    iteration: int
    attacker_pool: list[int]
    defender_pool: list[int]
    duality_gap: float
    samples: int


class DoubleOracleSolver(BaseEstimator):
    """Double oracle with exact enumerative best responses.

    Pools start from one uniform-random pure action per side and grow by
    each side's best response to the opponent's meta strategy until
    neither response improves, the iteration cap is reached, or the
    sample budget runs out.
    """

    def __init__(
        self,
        max_iterations: int = 500,
        meta_tolerance: float = 1e-6,
        meta_max_iters: int = 100_000,
        br_tolerance: float = 1e-9,
        sample_budget: int | None = None,
        enumeration_cap: int = DEFAULT_ENUMERATION_CAP,
        seed: int = 3407,
    ):
        self.max_iterations = max_iterations
        self.meta_tolerance = meta_tolerance
        self.meta_max_iters = meta_max_iters
        self.br_tolerance = br_tolerance
        self.sample_budget = sample_budget
        self.enumeration_cap = enumeration_cap
        self.seed = seed

    def fit(self, instance: GameInstance, y=None) -> "DoubleOracleSolver":
        attacker_actions = enumerate_attacker_actions(instance.graph, cap=self.enumeration_cap)
        defender_actions = enumerate_defender_actions(instance.defenders, cap=self.enumeration_cap)
        payoff = payoff_matrix(instance.graph, attacker_actions, defender_actions)
        rng = make_rng(self.seed, 17)
        att_pool = [int(rng.integers(0, len(attacker_actions)))]
        def_pool = [int(rng.integers(0, len(defender_actions)))]
        filled_cells = 0
        queries = 0
        metrics = MetricsLog()
        pools: list[PoolSnapshot] = []
        x_full = np.zeros(len(attacker_actions))
        y_full = np.zeros(len(defender_actions))
        x_full[att_pool[0]] = 1.0
        y_full[def_pool[0]] = 1.0

        for iteration in range(1, self.max_iterations + 1):
            # Fill only the payoff cells the restricted game newly needs.
            new_cells = len(att_pool) * len(def_pool) - filled_cells
            filled_cells += new_cells
            queries += new_cells
            sub = payoff[np.ix_(att_pool, def_pool)]
            x_r, y_r, _ = solve_restricted(sub, self.meta_tolerance, self.meta_max_iters)
            x_full = np.zeros(len(attacker_actions))
            y_full = np.zeros(len(defender_actions))
            x_full[att_pool] = x_r.probabilities
            y_full[def_pool] = y_r.probabilities
            value = float(x_full @ payoff @ y_full)

            # Best responses over the full action sets; each candidate is
            # scored against every support atom of the opponent's meta mix.
            att_support = int(np.count_nonzero(x_full > 0))
            def_support = int(np.count_nonzero(y_full > 0))
            queries += len(attacker_actions) * def_support
            queries += len(defender_actions) * att_support
            br_att, br_att_value = best_response(payoff, y_full, "attacker")
            br_def, br_def_value = best_response(payoff, x_full, "defender")

            gap = (br_att_value - value) + (br_def_value - (-value))
            metrics.append(
                MetricsRow(
                    step=iteration,
                    samples=queries,
                    loss_estimate=0.0,
                    duality_gap=gap,
                    eta=0.0,
                    tau=0.0,
                    epsilon=0.0,
                )
            )
            pools.append(
                PoolSnapshot(iteration, list(att_pool), list(def_pool), gap, queries)
            )

            improves_att = br_att_value - value > self.br_tolerance and br_att not in att_pool
            improves_def = br_def_value - (-value) > self.br_tolerance and br_def not in def_pool
            out_of_budget = self.sample_budget is not None and queries >= self.sample_budget
            if (not improves_att and not improves_def) or out_of_budget:
                break
            if improves_att:
                att_pool.append(br_att)
            if improves_def:
                def_pool.append(br_def)

        self.attacker_actions_ = attacker_actions
        self.defender_actions_ = defender_actions
        self.payoff_ = payoff
        self.attacker_strategy_ = MixedStrategy(x_full)
        self.defender_strategy_ = MixedStrategy(y_full)
        self.restricted_game_ = RestrictedGame(
            list(att_pool),
            list(def_pool),
            payoff[np.ix_(att_pool, def_pool)],
            (MixedStrategy(x_full[att_pool] / x_full[att_pool].sum()),
             MixedStrategy(y_full[def_pool] / y_full[def_pool].sum())),
        )
        self.pools_ = pools
        self.metrics_ = metrics
        self.samples_consumed_ = queries
        self.duality_gap_ = duality_gap(
            self.attacker_strategy_, self.defender_strategy_, payoff
        )
        return self
