"""Flat-strategy baseline: the same advantage estimator as the tree
solver, but over one explicit logit vector per player with true
per-action uniform exploration mixing.  Only usable when both action
spaces enumerate."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .errors import DegenerateInstanceError, TrainingAbortError
from .evaluation import GapEvaluator
from .graphs import DEFAULT_ENUMERATION_CAP, GameInstance, MixedStrategy
from .metrics import MetricsLog, MetricsRow
from .randomness import make_rng
from .training import Hyperparameters


@dataclass
class FlatStrategy:
    """Logit-parameterized distribution over an enumerated action list."""

    logits: np.ndarray

    def probabilities(self) -> np.ndarray:
        z = self.logits - self.logits.max()
        e = np.exp(z)
        return e / e.sum()

    def as_mixed(self) -> MixedStrategy:
        return MixedStrategy(self.probabilities())


class _AdamVec:
    """Dense adaptive-moment state for one logit vector."""

    def __init__(self, n: int):
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, logits: np.ndarray, grad: np.ndarray, lr: float) -> None:
        self.t += 1
        self.m = 0.9 * self.m + 0.1 * grad
        self.v = 0.999 * self.v + 0.001 * grad * grad
        mhat = self.m / (1 - 0.9**self.t)
        vhat = self.v / (1 - 0.999**self.t)
        logits -= lr * mhat / (np.sqrt(vhat) + 1e-8)


class _SgdVec:
    def __init__(self, n: int):
        self.t = 0

    def step(self, logits: np.ndarray, grad: np.ndarray, lr: float) -> None:
        self.t += 1
        logits -= lr * grad


def _sample_excluding(cdf: np.ndarray, probs: np.ndarray, first: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vectorized inverse-CDF draw from ``probs`` conditioned on avoiding
    the per-sample ``first`` index."""
    pf = probs[first]
    low = cdf[first] - pf
    t = u * (1.0 - pf)
    t = np.where(t >= low, t + pf, t)
    alts = np.searchsorted(cdf, t, side="right")
    alts = np.minimum(alts, len(cdf) - 1)
    clash = alts == first
    if np.any(clash):
        bumped = np.where(first + 1 < len(cdf), first + 1, first - 1)
        alts = np.where(clash, bumped, alts)
    return alts


class _FlatPlayer:
    def __init__(self, n_actions: int, optimizer: str):
        if n_actions < 2:
            raise DegenerateInstanceError("flat training needs at least two actions")
        self.strategy = FlatStrategy(np.zeros(n_actions))
        self.opt = _AdamVec(n_actions) if optimizer == "adam" else _SgdVec(n_actions)
        self.n = n_actions

    def draw_batch(self, rng, eps: float, batch: int, prune: bool):
        """Returns (first indices, alt indices, pruned-law probs, probs)."""
        x = self.strategy.probabilities()
        cdf = np.cumsum(x)
        cdf[-1] = 1.0
        firsts = np.searchsorted(cdf, rng.random(batch), side="right")
        firsts = np.minimum(firsts, self.n - 1)
        mixed = (1.0 - eps) * x + eps / self.n
        mixed_cdf = np.cumsum(mixed)
        mixed_cdf[-1] = 1.0
        if prune:
            alts = _sample_excluding(mixed_cdf, mixed, firsts, rng.random(batch))
            p = mixed[alts] / (1.0 - mixed[firsts])
        else:
            alts = np.searchsorted(mixed_cdf, rng.random(batch), side="right")
            alts = np.minimum(alts, self.n - 1)
            p = mixed[alts]
        return firsts, alts, p, x


def nal_train_flat(
    instance: GameInstance,
    hyper: Hyperparameters,
    seed: int = 3407,
    metrics: MetricsLog | None = None,
    eval_cadence: int | None = None,
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP,
    sample_budget: int | None = None,
    stop_at_gap: float | None = None,
) -> tuple[FlatStrategy, FlatStrategy, GapEvaluator]:
    """Train flat strategies for both players; emits the shared metrics
    schema with exact duality gaps at every evaluation interval."""
    hyper.validate()
    evaluator = GapEvaluator(instance, cap=enumeration_cap)
    payoff = evaluator.payoff
    att = _FlatPlayer(len(evaluator.attacker_actions), hyper.optimizer)
    dfn = _FlatPlayer(len(evaluator.defender_actions), hyper.optimizer)
    rng = make_rng(seed, 13)
    eta, tau, eps = hyper.learning_rate, hyper.tau, hyper.epsilon
    floor = hyper.log_prob_floor
    samples = 0
    cadence = eval_cadence if eval_cadence else max(hyper.iterations // 200, 1)

    def emit(step: int, loss: float) -> float:
        gap = evaluator.gap(att.strategy.as_mixed(), dfn.strategy.as_mixed())
        if metrics is not None:
            metrics.append(
                MetricsRow(
                    step=step,
                    samples=samples,
                    loss_estimate=loss,
                    duality_gap=gap,
                    eta=eta,
                    tau=tau,
                    epsilon=eps,
                )
            )
        return gap

    emit(0, 0.0)
    for t in range(1, hyper.iterations + 1):
        af, aa, ap, ax = att.draw_batch(rng, eps, hyper.batch_size, not hyper.ablate_prune)
        df, da, dp, dx = dfn.draw_batch(rng, eps, hyper.batch_size, not hyper.ablate_prune)
        # Simulator queries: each player's alternative against the
        # opponents' first draws.
        r_att = payoff[aa, df] * -1.0 + tau * np.log(np.maximum(ax[aa], floor))
        r_def = payoff[af, da] + tau * np.log(np.maximum(dx[da], floor))
        samples += 2 * hyper.batch_size
        loss = 0.0
        for player, (r, alts, p, x) in (
            (att, (r_att, aa, ap, ax)),
            (dfn, (r_def, da, dp, dx)),
        ):
            v = float(r.mean())
            g = (r - v) / p
            w = g * x[alts]
            loss += float(w.sum())
            grad = np.bincount(alts, weights=w, minlength=player.n) - x * w.sum()
            if not np.all(np.isfinite(grad)):
                raise TrainingAbortError("non-finite flat gradient")
            player.opt.step(player.strategy.logits, grad, eta)
        if t % hyper.decay_period == 0:
            eta *= hyper.lr_decay
            tau *= hyper.tau_decay
        hit_budget = sample_budget is not None and samples >= sample_budget
        if t % cadence == 0 or t == hyper.iterations or hit_budget:
            gap = emit(t, loss)
            if stop_at_gap is not None and gap < stop_at_gap:
                break
        if hit_budget:
            break
    return att.strategy, dfn.strategy, evaluator


class FlatSolver(BaseEstimator):
    """Enumerated-strategy equilibrium solver (scikit-learn style).

    Defaults follow the tuned flat-baseline setting: a higher entropy
    weight and slower, sparser decay than the tree solver.
    """

    def __init__(
        self,
        iterations: int = 50_000,
        batch_size: int = 100,
        learning_rate: float = 1e-4,
        tau: float = 0.1,
        epsilon: float = 0.8,
        update_rate: float = 0.1,
        decay_period: int | None = None,
        lr_decay: float = 0.9,
        tau_decay: float = 0.9,
        ablate_prune: bool = False,
        log_prob_floor: float = 1e-12,
        optimizer: str = "adam",
        eval_cadence: int | None = None,
        sample_budget: int | None = None,
        stop_at_gap: float | None = None,
        enumeration_cap: int = DEFAULT_ENUMERATION_CAP,
        seed: int = 3407,
    ):
        self.iterations = iterations
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.tau = tau
        self.epsilon = epsilon
        self.update_rate = update_rate
        self.decay_period = decay_period
        self.lr_decay = lr_decay
        self.tau_decay = tau_decay
        self.ablate_prune = ablate_prune
        self.log_prob_floor = log_prob_floor
        self.optimizer = optimizer
        self.eval_cadence = eval_cadence
        self.sample_budget = sample_budget
        self.stop_at_gap = stop_at_gap
        self.enumeration_cap = enumeration_cap
        self.seed = seed

    def hyperparameters(self) -> Hyperparameters:
        period = self.decay_period
        if period is None:
            period = max(1, round(self.update_rate * self.iterations))
        return Hyperparameters(
            iterations=self.iterations,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            tau=self.tau,
            epsilon=self.epsilon,
            decay_period=period,
            lr_decay=self.lr_decay,
            tau_decay=self.tau_decay,
            ablate_prune=self.ablate_prune,
            log_prob_floor=self.log_prob_floor,
            optimizer=self.optimizer,
        )

    def fit(self, instance: GameInstance, y=None) -> "FlatSolver":
        metrics = MetricsLog()
        att, dfn, evaluator = nal_train_flat(
            instance,
            self.hyperparameters(),
            seed=self.seed,
            metrics=metrics,
            eval_cadence=self.eval_cadence,
            enumeration_cap=self.enumeration_cap,
            sample_budget=self.sample_budget,
            stop_at_gap=self.stop_at_gap,
        )
        self.attacker_strategy_ = att
        self.defender_strategy_ = dfn
        self.evaluator_ = evaluator
        self.metrics_ = metrics
        self.duality_gap_ = metrics.rows[-1].duality_gap
        self.samples_consumed_ = metrics.rows[-1].samples
        return self
