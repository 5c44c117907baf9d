"""Independent reference implementations used to freeze expected values.

Everything here is deliberately naive and kept separate from the package
code paths it checks: plain recursion for path enumeration, direct payoff
evaluation, closed-form smoothed best responses for the regularized
equilibrium, and explicit summations for the estimator expectations.
"""

from __future__ import annotations

import numpy as np


def brute_force_paths(n, edges, starts, targets, max_len):
    """All simple start-to-target paths with <= max_len vertices that stop
    at the first target touched.  No pruning of any kind."""
    adj = {v: set() for v in range(n)}
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    targets = set(targets)
    out = []

    def rec(path):
        v = path[-1]
        if v in targets:
            out.append(tuple(path))
            return
        if len(path) >= max_len:
            return
        for w in sorted(adj[v]):
            if w not in path:
                rec(path + [w])

    for s in sorted(starts):
        rec([s])
    return sorted(out)


def brute_force_payoff(path, def_edges, value):
    """Eq-style utility: +value unless some defended edge is on the path."""
    on_path = {
        (min(a, b), max(a, b)) for a, b in zip(path, path[1:])
    }
    hit = any((min(u, v), max(u, v)) in on_path for u, v in def_edges)
    return -value if hit else value


def payoff_matrix_oracle(paths, defender_tuples, values_by_target):
    a = np.zeros((len(paths), len(defender_tuples)))
    for i, p in enumerate(paths):
        for j, d in enumerate(defender_tuples):
            a[i, j] = brute_force_payoff(p, d, values_by_target[p[-1]])
    return a


def exploitability(x, y, payoff):
    return float((payoff @ y).max() - (x @ payoff).min())


def regularized_equilibrium(payoff, tau, tol=1e-10, max_iters=500_000):
    """Unique interior equilibrium of the entropy-regularized game by
    damped smoothed-best-response iteration.

    The regularized exploitability has a closed form through log-sum-exp,
    which gives an exact stopping rule.
    """

    def softmax(v):
        z = np.exp((v - v.max()) / 1.0)
        return z / z.sum()

    m, n = payoff.shape
    x = np.full(m, 1.0 / m)
    y = np.full(n, 1.0 / n)
    for _ in range(max_iters):
        bx = softmax(payoff @ y / tau)
        by = softmax(-(x @ payoff) / tau)
        x = 0.5 * x + 0.5 * bx
        y = 0.5 * y + 0.5 * by
        if regularized_gap(x, y, payoff, tau) < tol:
            return x, y
    raise RuntimeError("regularized equilibrium iteration did not converge")


def regularized_gap(x, y, payoff, tau):
    """Exploitability of the tau-regularized game, via the closed form
    max_x' <x', v> + tau H(x') = tau * logsumexp(v / tau)."""

    def lse(v):
        top = v.max()
        return top + np.log(np.exp(v - top).sum())

    def entropy(p):
        q = p[p > 0]
        return -float(q @ np.log(q))

    va = payoff @ y
    vd = -(x @ payoff)
    best_att = tau * lse(va / tau)
    best_def = tau * lse(vd / tau)
    cur_att = float(x @ va) + tau * entropy(x)
    cur_def = float(y @ vd) + tau * entropy(y)
    return (best_att - cur_att) + (best_def - cur_def)


# -- estimator expectations ------------------------------------------------


def line13_reward_vector(payoff_to_player, own_probs, tau, floor=1e-12):
    """Expected reward term per own action: -E[payoff] + tau log p(a)."""
    return -payoff_to_player + tau * np.log(np.maximum(own_probs, floor))


def pruned_marginal(first_law, mixed_law):
    """Marginal law of the alternative draw under sample-and-prune."""
    n = len(first_law)
    out = np.zeros(n)
    for c in range(n):
        for f in range(n):
            if f != c:
                out[c] += first_law[f] * mixed_law[c] / (1.0 - mixed_law[f])
    return out


def nal_loss(F, x, x_hat):
    """Advantage loss value <F - <F, x_hat> 1, x>."""
    return float(F @ x - F @ x_hat)


def pruned_loss_expectation(F, x, mixed, batch_size):
    """Exact expectation of the batch loss estimate per sample under
    sample-and-prune with conditional importance weights.

    Relative to the plain advantage loss the pruned estimator carries an
    elementwise (1 - x) tilt (the first draw excludes its own action from
    the update) and the shared batch-mean baseline contributes the
    (1 - 1/S) factor.  Both vanish exactly where the advantage vector is
    zero, so stationary points are untouched.
    """
    x_hat = pruned_marginal(x, mixed)
    v = float(F @ x_hat)
    return (1.0 - 1.0 / batch_size) * float(np.sum((F - v) * x * (1.0 - x)))


def mixed_loss_expectation(F, x, mixed, batch_size):
    """Exact expectation per sample without pruning (alternative drawn
    straight from the mixture)."""
    v = float(F @ mixed)
    return (1.0 - 1.0 / batch_size) * float(F @ x - v)


def pruned_coordinate_expectation(F, x, mixed, batch_size):
    """Exact expectation of the advantage estimate per coordinate."""
    x_hat = pruned_marginal(x, mixed)
    v = float(F @ x_hat)
    return (1.0 - 1.0 / batch_size) * (F - v) * (1.0 - x)


# -- matrix-game value oracle ------------------------------------------------


def fictitious_play_bracket(payoff, iters=200_000):
    """Lower/upper bounds on the game value from alternating fictitious
    play; the bracket shrinks as iterations grow."""
    m, n = payoff.shape
    x_counts = np.zeros(m)
    y_counts = np.zeros(n)
    x_counts[0] = 1.0
    y_counts[0] = 1.0
    lower, upper = -np.inf, np.inf
    for _ in range(iters):
        x_avg = x_counts / x_counts.sum()
        y_avg = y_counts / y_counts.sum()
        br_att = int(np.argmax(payoff @ y_avg))
        br_def = int(np.argmin(x_avg @ payoff))
        upper = min(upper, float((payoff @ y_avg).max()))
        lower = max(lower, float((x_avg @ payoff).min()))
        x_counts[br_att] += 1.0
        y_counts[br_def] += 1.0
    return lower, upper


def adam_recurrence(grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Reference adaptive-moment recurrence; returns parameter trajectory
    starting from zero."""
    theta = 0.0
    m = v = 0.0
    out = []
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1**t)
        vhat = v / (1 - beta2**t)
        theta -= lr * mhat / (np.sqrt(vhat) + eps)
        out.append(theta)
    return out


def central_difference(f, x0, h=1e-6):
    """Central finite difference of a scalar function."""
    return (f(x0 + h) - f(x0 - h)) / (2.0 * h)
