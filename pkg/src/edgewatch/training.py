"""Stochastic equilibrium training over tree policies.

One training iteration draws a batch of joint samples.  Per sample, each
player first draws an action from its bare policy; the joint first-draw
profile stands in for the opponents' play.  Each player then draws a
distinct alternative action from the exploration-mixed distribution with
the first draw pruned away, scores it against the opponents' first draws,
and the batch of scored alternatives yields an advantage-weighted
score-function gradient on the tree parameters.  Learning rate and the
entropy weight decay geometrically on a fixed period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from sklearn.base import BaseEstimator

from .errors import DegenerateInstanceError, InstanceError, TrainingAbortError
from .evaluation import GapEvaluator
from .graphs import DEFAULT_ENUMERATION_CAP, GameInstance, estimate_enumerable
from .metrics import MetricsLog, MetricsRow
from .policies import TreePolicy, make_optimizer
from .randomness import UniformSource, make_rng
from .trees import AttackerTreeView, DefenderTreeView

ATTACKER = "attacker"
DEFENDER = "defender"
PLAYERS = (ATTACKER, DEFENDER)

#: Rejection draws before falling back to the exact pruned walk.
MAX_PRUNE_REJECTIONS = 64


@dataclass
class Hyperparameters:
    """Training knobs; defaults follow the tuned tree-solver setting."""

    iterations: int = 50_000
    batch_size: int = 100
    learning_rate: float = 1e-4
    tau: float = 0.05
    epsilon: float = 0.8
    decay_period: int = 500
    lr_decay: float = 0.8
    tau_decay: float = 0.7
    ablate_prune: bool = False
    log_prob_floor: float = 1e-12
    optimizer: str = "adam"
    policy_mode: str = "tabular"
    epsilon_decay: bool = False

    def validate(self) -> None:
        if self.iterations <= 0 or self.batch_size <= 0 or self.decay_period <= 0:
            raise InstanceError("iterations, batch_size and decay_period must be positive")
        if self.learning_rate <= 0 or self.tau <= 0 or self.log_prob_floor <= 0:
            raise InstanceError("learning_rate, tau and log_prob_floor must be positive")
        if not 0.0 <= self.epsilon < 1.0:
            raise InstanceError("epsilon must lie in [0, 1)")
        if not 0.0 < self.lr_decay < 1.0 or not 0.0 < self.tau_decay < 1.0:
            raise InstanceError("decay weights must lie in (0, 1)")


@dataclass
class SampleRecord:
    """One scored alternative draw: the [player, action, reward, prob]
    tuple feeding the loss estimator, plus its gradient replay log."""

    player: str
    alt_action: tuple
    reward_term: float
    sample_prob: float
    step_log: list
    alt_prob: float  # bare-policy probability of alt_action


@dataclass
class PruneDraw:
    first: tuple
    first_steps: list
    alt: tuple
    alt_steps: list
    p: float
    alt_mixed_prob: float


@dataclass
class TrainState:
    """Mutable state of one seeded training run."""

    instance: GameInstance
    policies: dict
    optimizers: dict
    eta: float
    tau: float
    epsilon: float
    uniforms: UniformSource
    iteration: int = 0
    samples_consumed: int = 0
    last_v: dict = field(default_factory=dict)
    _path_edges: dict = field(default_factory=dict)

    def payoff(self, att_path: tuple, def_edges: tuple) -> float:
        """Simulator query: signed attacker payoff of a joint pure action.
        Every call burns one sample from the shared budget."""
        self.samples_consumed += 1
        edges = self._path_edges.get(att_path)
        if edges is None:
            edges = frozenset(
                (att_path[i], att_path[i + 1]) if att_path[i] < att_path[i + 1]
                else (att_path[i + 1], att_path[i])
                for i in range(len(att_path) - 1)
            )
            self._path_edges[att_path] = edges
        value = self.instance.graph.target_values[att_path[-1]]
        for e in def_edges:
            if e in edges:
                return -value
        return value


def init_train_state(
    instance: GameInstance, hyper: Hyperparameters, seed: int
) -> TrainState:
    hyper.validate()
    att_view = AttackerTreeView(instance.graph)
    def_view = DefenderTreeView(instance.defenders)
    policies = {
        ATTACKER: TreePolicy(att_view, mode=hyper.policy_mode, seed=seed),
        DEFENDER: TreePolicy(def_view, mode=hyper.policy_mode, seed=seed + 1),
    }
    optimizers = {p: make_optimizer(hyper.optimizer) for p in PLAYERS}
    return TrainState(
        instance=instance,
        policies=policies,
        optimizers=optimizers,
        eta=hyper.learning_rate,
        tau=hyper.tau,
        epsilon=hyper.epsilon,
        uniforms=UniformSource(make_rng(seed, 11)),
    )


def sample_and_prune(
    policy: TreePolicy,
    eps: float,
    uniforms: UniformSource,
    ablate_prune: bool = False,
) -> PruneDraw:
    """Two-step draw: sample a first action from the bare policy, then an
    alternative from the exploration mixture with the first action removed
    and its mass renormalized.

    The returned ``p`` is the exact pruned-law probability of the
    alternative.  With ``ablate_prune`` the alternative is drawn straight
    from the mixture (first action not removed) and ``p`` is its mixture
    probability.
    """
    first, _, first_steps = policy.sample_walk(uniforms, 0.0)
    if ablate_prune:
        alt, alt_prob, alt_steps = policy.sample_walk(uniforms, eps)
        return PruneDraw(first, first_steps, alt, alt_steps, alt_prob, alt_prob)
    first_mixed = policy.steps_prob(first_steps, eps)
    remainder = 1.0 - first_mixed
    if remainder <= 1e-15:
        raise DegenerateInstanceError(
            "sample-and-prune needs at least two actions with positive mass"
        )
    for _ in range(MAX_PRUNE_REJECTIONS):
        alt, alt_prob, alt_steps = policy.sample_walk(uniforms, eps)
        if alt != first:
            return PruneDraw(first, first_steps, alt, alt_steps, alt_prob / remainder, alt_prob)
    return _exact_pruned_walk(policy, first_steps, eps, uniforms, remainder)


def _exact_pruned_walk(
    policy: TreePolicy,
    first_steps: list,
    eps: float,
    uniforms: UniformSource,
    remainder: float,
) -> PruneDraw:
    """Inverse-CDF draw from the pruned mixture without rejection.

    Walking down the first action's path, the mass of alternatives that
    diverge at each node is the path prefix times the sibling
    probabilities; these masses telescope to exactly ``1 - mixed(first)``.
    """
    u = uniforms.next() * remainder
    prefix = 1.0
    last_branch = None
    for i, (history, slot) in enumerate(first_steps):
        entry = policy._mixed_entry(history, eps)
        node, probs = entry[2], entry[4]
        for s in node.valid_slots:
            if s == slot:
                continue
            mass = prefix * probs[s]
            if mass <= 0.0:
                continue
            if u < mass:
                return _diverge(policy, first_steps, i, s, eps, uniforms, remainder)
            u -= mass
            last_branch = (i, s)
        prefix *= probs[slot]
    if last_branch is None:
        raise DegenerateInstanceError("no alternative action exists to prune into")
    # Floating-point residue: fold it into the final divergence bin.
    i, s = last_branch
    return _diverge(policy, first_steps, i, s, eps, uniforms, remainder)


def _diverge(
    policy: TreePolicy,
    first_steps: list,
    i: int,
    slot: int,
    eps: float,
    uniforms: UniformSource,
    remainder: float,
) -> PruneDraw:
    history, _ = first_steps[i]
    node = policy.view.node(history)
    start = history + (node.items[slot],)
    tail, _, tail_steps = policy.walk_from(start, uniforms, eps)
    alt_steps = [*first_steps[:i], (history, slot), *tail_steps]
    alt_prob = policy.steps_prob(alt_steps, eps)
    first = _steps_action(policy, first_steps)
    return PruneDraw(first, first_steps, tail, alt_steps, alt_prob / remainder, alt_prob)


def _steps_action(policy: TreePolicy, steps: list) -> tuple:
    history, slot = steps[-1]
    return history + (policy.view.node(history).items[slot],)


def make_sample(state: TrainState, hyper: Hyperparameters) -> dict:
    """One joint sample: first-draw profile for all players, then a scored
    pruned alternative per player.  Returns one record per player."""
    draws = {
        player: sample_and_prune(
            state.policies[player], state.epsilon, state.uniforms, hyper.ablate_prune
        )
        for player in PLAYERS
    }
    att_first = draws[ATTACKER].first
    def_first = draws[DEFENDER].first
    floor = hyper.log_prob_floor
    records = {}
    for player, opp_first in ((ATTACKER, def_first), (DEFENDER, att_first)):
        draw = draws[player]
        if player == ATTACKER:
            payoff = state.payoff(draw.alt, opp_first)
        else:
            payoff = -state.payoff(opp_first, draw.alt)
        alt_prob = state.policies[player].steps_prob(draw.alt_steps, 0.0)
        reward = -payoff + state.tau * math.log(max(alt_prob, floor))
        records[player] = SampleRecord(
            player=player,
            alt_action=draw.alt,
            reward_term=reward,
            sample_prob=draw.p,
            step_log=draw.alt_steps,
            alt_prob=alt_prob,
        )
    return records


def collect_batch(state: TrainState, hyper: Hyperparameters) -> tuple[dict, dict, float]:
    """Collect one batch of samples and turn it into per-player gradients.

    Per record the advantage coefficient is ``(r - v) / p`` against the
    batch-mean baseline ``v``; its gradient contribution is the
    coefficient times the gradient of the alternative's probability.
    Policies are left untouched.  Returns (records, gradients, loss
    estimate)."""
    batches = {p: [] for p in PLAYERS}
    for _ in range(hyper.batch_size):
        records = make_sample(state, hyper)
        for player in PLAYERS:
            batches[player].append(records[player])
    loss_estimate = 0.0
    grads = {}
    for player in PLAYERS:
        records = batches[player]
        v = sum(r.reward_term for r in records) / len(records)
        state.last_v[player] = v
        policy = state.policies[player]
        grad = policy.zero_grad()
        for rec in records:
            coeff = (rec.reward_term - v) / rec.sample_prob
            weight = coeff * rec.alt_prob
            loss_estimate += weight
            if weight != 0.0:
                policy.accumulate_log_prob_grad(grad, rec.step_log, weight)
        grads[player] = grad
    return batches, grads, loss_estimate


def train_step(state: TrainState, hyper: Hyperparameters) -> float:
    """One batch plus the parameter update; returns the scalar loss
    estimate (sum of coefficient-weighted action probabilities)."""
    _, grads, loss_estimate = collect_batch(state, hyper)
    if not math.isfinite(loss_estimate):
        raise TrainingAbortError(
            "non-finite loss estimate; restart from the last saved checkpoint"
        )
    for player in PLAYERS:
        state.optimizers[player].apply(state.policies[player], grads[player], state.eta)
    state.iteration += 1
    return loss_estimate


def train(
    state: TrainState,
    hyper: Hyperparameters,
    metrics: MetricsLog | None = None,
    gap_fn=None,
    eval_cadence: int | None = None,
    sample_budget: int | None = None,
    stop_at_gap: float | None = None,
) -> dict:
    """Run the full training loop with periodic decay and evaluation.

    ``gap_fn`` maps the current policies to an exact duality gap on
    enumerable instances; omitted on larger games.  ``sample_budget``
    stops the run once the consumed simulator queries reach the budget.
    Fully deterministic for a fixed seed and config.
    """
    hyper.validate()
    cadence = eval_cadence if eval_cadence else max(hyper.iterations // 200, 1)
    eps0 = hyper.epsilon

    def emit(step: int, loss: float) -> float | None:
        gap = gap_fn(state.policies) if gap_fn is not None else None
        if metrics is not None:
            metrics.append(
                MetricsRow(
                    step=step,
                    samples=state.samples_consumed,
                    loss_estimate=loss,
                    duality_gap=gap,
                    eta=state.eta,
                    tau=state.tau,
                    epsilon=state.epsilon,
                )
            )
        return gap

    emit(0, 0.0)
    for t in range(1, hyper.iterations + 1):
        if hyper.epsilon_decay:
            state.epsilon = eps0 * (1.0 - (t - 1) / hyper.iterations)
        loss = train_step(state, hyper)
        if t % hyper.decay_period == 0:
            state.eta *= hyper.lr_decay
            state.tau *= hyper.tau_decay
        hit_budget = sample_budget is not None and state.samples_consumed >= sample_budget
        if t % cadence == 0 or t == hyper.iterations or hit_budget:
            gap = emit(t, loss)
            if stop_at_gap is not None and gap is not None and gap < stop_at_gap:
                break
        if hit_budget:
            break
    return state.policies


class TreeSolver(BaseEstimator):
    """Equilibrium solver over tree-factored policies (scikit-learn style).

    ``fit`` takes a :class:`GameInstance` and trains one policy per player;
    the learned policies, metrics rows and final gap (when the instance is
    enumerable) land in trailing-underscore attributes.
    """

    def __init__(
        self,
        iterations: int = 50_000,
        batch_size: int = 100,
        learning_rate: float = 1e-4,
        tau: float = 0.05,
        epsilon: float = 0.8,
        update_rate: float = 0.01,
        decay_period: int | None = None,
        lr_decay: float = 0.8,
        tau_decay: float = 0.7,
        ablate_prune: bool = False,
        log_prob_floor: float = 1e-12,
        optimizer: str = "adam",
        policy_mode: str = "network",
        epsilon_decay: bool = False,
        eval_cadence: int | None = None,
        evaluate_gap: bool = True,
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
        self.policy_mode = policy_mode
        self.epsilon_decay = epsilon_decay
        self.eval_cadence = eval_cadence
        self.evaluate_gap = evaluate_gap
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
            policy_mode=self.policy_mode,
            epsilon_decay=self.epsilon_decay,
        )

    def fit(self, instance: GameInstance, y=None) -> "TreeSolver":
        hyper = self.hyperparameters()
        state = init_train_state(instance, hyper, self.seed)
        metrics = MetricsLog()
        gap_fn = None
        evaluator = None
        if self.evaluate_gap and estimate_enumerable(instance, self.enumeration_cap):
            evaluator = GapEvaluator(instance, cap=self.enumeration_cap)
            gap_fn = lambda policies: evaluator.gap_of_policies(policies)  # noqa: E731
        train(
            state,
            hyper,
            metrics=metrics,
            gap_fn=gap_fn,
            eval_cadence=self.eval_cadence,
            sample_budget=self.sample_budget,
            stop_at_gap=self.stop_at_gap,
        )
        self.state_ = state
        self.attacker_policy_ = state.policies[ATTACKER]
        self.defender_policy_ = state.policies[DEFENDER]
        self.metrics_ = metrics
        self.samples_consumed_ = state.samples_consumed
        self.evaluator_ = evaluator
        self.duality_gap_ = metrics.rows[-1].duality_gap if metrics.rows else None
        return self
