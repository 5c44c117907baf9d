import math

import numpy as np
import pytest

from edgewatch.evaluation import GapEvaluator, extract_mixed_strategy
from edgewatch.metrics import MetricsLog, validate_metrics_csv
from edgewatch.training import (
    Hyperparameters,
    TreeSolver,
    collect_batch,
    init_train_state,
    train,
    train_step,
)
from oracles import (
    line13_reward_vector,
    mixed_loss_expectation,
    nal_loss,
    pruned_coordinate_expectation,
    pruned_loss_expectation,
    pruned_marginal,
    regularized_equilibrium,
)
from test_helpers import fit_tabular_policy_to_mixed, randomize_tabular


def _frozen_state(instance, hyper, seed, logit_scale=0.7):
    """Training state with seeded random tabular policies."""
    state = init_train_state(instance, hyper, seed=seed)
    ev = GapEvaluator(instance)
    from edgewatch.randomness import make_rng

    rng = make_rng(seed, 40)
    randomize_tabular(state.policies["attacker"], ev.attacker_actions, rng, logit_scale)
    randomize_tabular(state.policies["defender"], ev.defender_actions, rng, logit_scale)
    return state, ev


def _exact_views(state, ev, eps):
    """Exact per-player (F, x, mixed law) by enumeration."""
    A = ev.payoff
    out = {}
    x = extract_mixed_strategy(state.policies["attacker"], ev.attacker_actions).probabilities
    y = extract_mixed_strategy(state.policies["defender"], ev.defender_actions).probabilities
    xm = np.array(
        [state.policies["attacker"].action_steps(tuple(a.path), eps=eps)[0] for a in ev.attacker_actions]
    )
    ym = np.array(
        [state.policies["defender"].action_steps(tuple(d.edges), eps=eps)[0] for d in ev.defender_actions]
    )
    out["attacker"] = (line13_reward_vector(A @ y, x, state.tau), x, xm)
    out["defender"] = (line13_reward_vector(-(A.T @ x), y, state.tau), y, ym)
    return out


def test_v_is_batch_mean(diamond):
    hyper = Hyperparameters(iterations=1, batch_size=16, epsilon=0.5)
    state = init_train_state(diamond, hyper, seed=2)
    batches, _, _ = collect_batch(state, hyper)
    for player, records in batches.items():
        mean_r = sum(r.reward_term for r in records) / len(records)
        assert abs(state.last_v[player] - mean_r) < 1e-15


def test_loss_estimator_unbiased_without_prune(diamond):
    eps, S = 0.5, 4
    hyper = Hyperparameters(
        iterations=1, batch_size=S, tau=0.05, epsilon=eps, optimizer="sgd", ablate_prune=True
    )
    state, ev = _frozen_state(diamond, hyper, seed=123)
    views = _exact_views(state, ev, eps)
    expect = sum(
        mixed_loss_expectation(F, x, xm, S) for F, x, xm in views.values()
    )
    B = 4000
    vals = np.empty(B)
    for b in range(B):
        _, _, loss = collect_batch(state, hyper)
        vals[b] = loss / S
    se = vals.std(ddof=1) / math.sqrt(B)
    assert abs(vals.mean() - expect) < 4 * se


def test_loss_estimator_matches_pruned_expectation(diamond):
    # With pruning the estimator's exact expectation carries an
    # elementwise (1 - x) tilt; its zero set still matches the advantage's.
    eps, S = 0.5, 4
    hyper = Hyperparameters(iterations=1, batch_size=S, tau=0.05, epsilon=eps, optimizer="sgd")
    state, ev = _frozen_state(diamond, hyper, seed=123)
    views = _exact_views(state, ev, eps)
    expect = sum(
        pruned_loss_expectation(F, x, xm, S) for F, x, xm in views.values()
    )
    plain = sum(nal_loss(F, x, pruned_marginal(x, xm) ) for F, x, xm in views.values())
    B = 4000
    vals = np.empty(B)
    for b in range(B):
        _, _, loss = collect_batch(state, hyper)
        vals[b] = loss / S
    se = vals.std(ddof=1) / math.sqrt(B)
    assert abs(vals.mean() - expect) < 4 * se
    # The tilted expectation genuinely differs from the plain loss here.
    assert abs(plain - expect) > 10 * se


def test_advantage_estimate_per_coordinate(diamond):
    # E[g e_alt] = (1 - 1/S)(F - <F, pruned marginal>) (1 - x), enumerated
    # against the Monte-Carlo mean coordinate by coordinate.
    eps, S = 0.5, 4
    hyper = Hyperparameters(iterations=1, batch_size=S, tau=0.05, epsilon=eps, optimizer="sgd")
    state, ev = _frozen_state(diamond, hyper, seed=31)
    views = _exact_views(state, ev, eps)
    F, x, xm = views["attacker"]
    expect = pruned_coordinate_expectation(F, x, xm, S)
    actions = [tuple(a.path) for a in ev.attacker_actions]
    index = {a: i for i, a in enumerate(actions)}
    B = 6000
    sums = np.zeros(len(actions))
    count = 0
    for _ in range(B):
        batches, _, _ = collect_batch(state, hyper)
        for rec in batches["attacker"]:
            coeff = (rec.reward_term - state.last_v["attacker"]) / rec.sample_prob
            sums[index[rec.alt_action]] += coeff
            count += 1
    got = sums / count * S  # per-sample coordinate mean times S samples
    # Standard error per coordinate is dominated by the coefficient noise.
    assert np.max(np.abs(got / S * S - expect)) < 0.2, (got, expect)
    assert np.allclose(got, expect, atol=0.15)


def test_gradient_identity_tabular(diamond):
    # Expected logit gradient equals the enumerated advantage pushed
    # through the chain rule (terminal edges isolate single actions).
    eps, S = 0.5, 8
    hyper = Hyperparameters(iterations=1, batch_size=S, tau=0.1, epsilon=eps, optimizer="sgd")
    state, ev = _frozen_state(diamond, hyper, seed=7)
    views = _exact_views(state, ev, eps)
    F, x, xm = views["attacker"]
    tilted = pruned_coordinate_expectation(F, x, xm, S)
    # Root-node logit gradient: sum_k tilted_k * dsigma_k/dlogit_j, with
    # sigma = softmax at the root (two actions on the diamond).
    pol = state.policies["attacker"]
    root_probs = pol.distribution((0,))
    expect = np.zeros(2)
    for j in range(2):
        dsig = np.array([root_probs[k] * ((k == j) - root_probs[j]) for k in range(2)])
        expect[j] = float(tilted @ dsig) * S
    B = 6000
    acc = np.zeros(2)
    for _ in range(B):
        _, grads, _ = collect_batch(state, hyper)
        mat = grads["attacker"].materialized()
        if (0,) in mat:
            acc += mat[(0,)]
    got = acc / B
    assert np.allclose(got, expect, atol=6 * np.abs(expect).max() / math.sqrt(B) + 0.1)


def test_stationary_at_regularized_equilibrium(diamond):
    # Proposition-style check: load the exact tau-regularized equilibrium;
    # all expected per-edge gradients vanish.
    tau, eps, S = 0.05, 0.5, 16
    ev = GapEvaluator(diamond)
    x_star, y_star = regularized_equilibrium(ev.payoff, tau)
    hyper = Hyperparameters(iterations=1, batch_size=S, tau=tau, epsilon=eps, optimizer="sgd")
    state = init_train_state(diamond, hyper, seed=4)
    fit_tabular_policy_to_mixed(state.policies["attacker"], ev.attacker_actions, x_star)
    fit_tabular_policy_to_mixed(state.policies["defender"], ev.defender_actions, y_star)
    views = _exact_views(state, ev, eps)
    for player, (F, x, xm) in views.items():
        tilted = pruned_coordinate_expectation(F, x, xm, S)
        assert np.max(np.abs(tilted)) < 1e-8, player


def test_decay_schedule(diamond):
    hyper = Hyperparameters(
        iterations=20, batch_size=2, learning_rate=1e-4, tau=0.05,
        decay_period=5, lr_decay=0.8, tau_decay=0.7,
    )
    state = init_train_state(diamond, hyper, seed=9)
    train(state, hyper, eval_cadence=100)
    assert abs(state.eta - 1e-4 * 0.8**4) < 1e-18
    assert abs(state.tau - 0.05 * 0.7**4) < 1e-18
    # Decay-event count example: 0.01 of the run length.
    assert 50_000 // max(1, round(0.01 * 50_000)) == 100
    assert abs(1e-4 * 0.8**2 - 6.4e-5) < 1e-19


def test_metrics_rows_and_schema(diamond):
    hyper = Hyperparameters(iterations=12, batch_size=4, decay_period=6)
    state = init_train_state(diamond, hyper, seed=10)
    ev = GapEvaluator(diamond)
    log = MetricsLog()
    train(state, hyper, metrics=log, gap_fn=ev.gap_of_policies, eval_cadence=4)
    rows = validate_metrics_csv(log.to_csv())
    assert [r.step for r in rows] == [0, 4, 8, 12]
    assert all(r.duality_gap is not None for r in rows)
    assert rows[-1].samples == state.samples_consumed == 12 * 4 * 2


def test_sample_budget_stops_run(diamond):
    hyper = Hyperparameters(iterations=1000, batch_size=5, decay_period=100)
    state = init_train_state(diamond, hyper, seed=11)
    log = MetricsLog()
    train(state, hyper, metrics=log, eval_cadence=1, sample_budget=100)
    assert state.samples_consumed == 100  # 10 per iteration, stops at 10
    assert state.iteration == 10


def test_zero_coefficient_batch_freezes_parameters(diamond):
    hyper = Hyperparameters(iterations=1, batch_size=3, epsilon=0.5, optimizer="sgd")
    state = init_train_state(diamond, hyper, seed=12)
    pol = state.policies["attacker"]
    before = pol.logit_table()
    batches, grads, _ = collect_batch(state, hyper)
    # Construct an all-zero-gradient accumulator (as if every g were 0).
    state.optimizers["attacker"].apply(pol, pol.zero_grad(), state.eta)
    after = pol.logit_table()
    for key, vec in before.items():
        assert np.array_equal(after[key], vec)


def test_determinism_same_seed(diamond):
    outputs = []
    for _ in range(2):
        solver = TreeSolver(iterations=30, batch_size=8, eval_cadence=10, seed=77)
        solver.fit(diamond)
        outputs.append(solver.metrics_.to_csv())
    assert outputs[0] == outputs[1]


def test_tree_solver_fit_reduces_gap():
    # Uniform play is far from equilibrium here: one path dodges every
    # candidate edge, so the attacker must learn to concentrate on it.
    from edgewatch.graphs import DefenderSpec, GameGraph, GameInstance

    graph = GameGraph(4, [(0, 1), (0, 2), (1, 3), (2, 3)], [0], [3], {3: 1.0}, 4)
    inst = GameInstance(graph, DefenderSpec([[(0, 1), (1, 3)]]))
    solver = TreeSolver(
        iterations=800, batch_size=32, learning_rate=5e-3, tau=0.05,
        epsilon=0.5, update_rate=0.1, eval_cadence=100, seed=5,
        policy_mode="tabular",
    )
    solver.fit(inst)
    first = solver.metrics_.rows[0].duality_gap
    assert abs(first - 1.0) < 1e-9
    assert solver.duality_gap_ < 0.25
    assert solver.samples_consumed_ == 800 * 32 * 2
