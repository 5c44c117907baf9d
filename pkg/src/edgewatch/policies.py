"""Tree policies: masked conditional distributions at decision nodes.

Two parameterizations share one interface.  Tabular mode keeps one logit
vector per node key (exact, lazily zero-initialized); network mode runs a
small two-hidden-layer ReLU net over node features with a zero-initialized
output layer, so a fresh policy is uniform over valid children in both
modes.  All gradients are analytic; there is no autodiff anywhere.

Tabular parameters live in one flat array indexed by node key, which
keeps the per-iteration optimizer update a handful of vectorized ops no
matter how many nodes a batch touches.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_left
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CheckpointError,
    InconsistencyError,
    TrainingAbortError,
)
from .randomness import UniformSource, make_rng

CHECKPOINT_SCHEMA = "edgewatch-policy-v1"
HIDDEN_WIDTH = 128


def masked_softmax(logits, valid) -> np.ndarray:
    """Normalized exponential over the unmasked slots; masked slots are
    exactly zero.  Raises on all-masked input."""
    valid = np.asarray(valid, dtype=bool)
    if not valid.any():
        raise InconsistencyError("conditional distribution over an all-masked node")
    z = np.asarray(logits, dtype=np.float64)[: len(valid)]
    shifted = z[valid] - z[valid].max()
    expd = np.exp(shifted)
    out = np.zeros(len(valid), dtype=np.float64)
    out[valid] = expd / expd.sum()
    return out


@dataclass
class GradientAccumulator:
    """Parameter-shaped sum of weighted log-probability gradients.

    Contributions are kept in a compact pending form (per node: total
    weight, per-slot weights, and the node's cached distribution), which
    makes accumulation a couple of dict updates per step.  Tabular
    gradients materialize into dense per-node vectors; network gradients
    materialize through one batched backward pass over the touched nodes.
    """

    pending: dict = field(default_factory=dict)
    network: list[np.ndarray] | None = None

    def add_step(self, key, slot: int, weight: float, probs_list: list, history: tuple = ()) -> None:
        entry = self.pending.get(key)
        if entry is None:
            self.pending[key] = [weight, {slot: weight}, probs_list, history]
        else:
            entry[0] += weight
            slots = entry[1]
            slots[slot] = slots.get(slot, 0.0) + weight

    def materialized(self) -> dict:
        """Dense per-key gradient vectors: sum_steps w * (e_slot - p)."""
        out = {}
        for key, (total, slots, probs_list, _) in self.pending.items():
            vec = np.asarray(probs_list) * (-total)
            for slot, w in slots.items():
                vec[slot] += w
            out[key] = vec
        return out

    def merge(self, other: "GradientAccumulator") -> None:
        for key, (total, slots, probs_list, history) in other.pending.items():
            entry = self.pending.get(key)
            if entry is None:
                self.pending[key] = [total, dict(slots), probs_list, history]
            else:
                entry[0] += total
                mine = entry[1]
                for slot, w in slots.items():
                    mine[slot] = mine.get(slot, 0.0) + w
        if other.network is not None:
            if self.network is None:
                self.network = [g.copy() for g in other.network]
            else:
                for mine, theirs in zip(self.network, other.network):
                    mine += theirs


class TreePolicy:
    """Policy over one player's decision tree (attacker or defender)."""

    def __init__(self, view, mode: str = "tabular", seed: int = 0):
        if mode not in ("tabular", "network"):
            raise ValueError(f"unknown policy mode {mode!r}")
        self.view = view
        self.mode = mode
        self.mask_width = view.mask_width
        self.version = 0
        self.weights: list[np.ndarray] = []
        if mode == "network":
            self._init_network(seed)
        # Flat tabular storage: key -> (offset, width, slot index array).
        self._flat = np.zeros(256, dtype=np.float64)
        self._offsets: dict = {}
        self._used = 0
        # Distribution caches, invalidated by bumping ``version``.
        self._dist_cache: dict = {}
        self._mixed_cache: dict = {}
        self._forward_cache: dict = {}

    # -- parameters ------------------------------------------------------

    def _init_network(self, seed: int) -> None:
        rng = make_rng(seed, 97)
        d_in, d_h, d_out = self.view.feature_dim, HIDDEN_WIDTH, self.mask_width
        w1 = rng.normal(0.0, np.sqrt(2.0 / d_in), size=(d_in, d_h))
        w2 = rng.normal(0.0, np.sqrt(2.0 / d_h), size=(d_h, d_h))
        # Zero-initialized head keeps the fresh policy uniform over valid
        # children, matching the tabular zero-logit initialization.
        self.weights = [
            w1,
            np.zeros(d_h),
            w2,
            np.zeros(d_h),
            np.zeros((d_h, d_out)),
            np.zeros(d_out),
        ]

    def _slot_range(self, key, width: int) -> tuple[int, np.ndarray]:
        """Offset of a key's logits in the flat store, allocating zeros on
        first touch."""
        entry = self._offsets.get(key)
        if entry is None:
            offset = self._used
            if offset + width > len(self._flat):
                grown = np.zeros(max(len(self._flat) * 2, offset + width), dtype=np.float64)
                grown[: len(self._flat)] = self._flat
                self._flat = grown
            self._used = offset + width
            entry = (offset, np.arange(offset, offset + width))
            self._offsets[key] = entry
        return entry

    def get_logits(self, key, width: int) -> np.ndarray:
        offset, _ = self._slot_range(key, width)
        return self._flat[offset : offset + width].copy()

    def set_logits(self, key, values) -> None:
        values = np.asarray(values, dtype=np.float64)
        offset, _ = self._slot_range(key, len(values))
        self._flat[offset : offset + len(values)] = values
        self.bump_version()

    def logit_table(self) -> dict:
        """Snapshot of all touched node logits (for checkpoints/tests)."""
        out = {}
        for key, (offset, idx) in self._offsets.items():
            out[key] = self._flat[offset : offset + len(idx)].copy()
        return out

    def flat_parameters(self) -> np.ndarray:
        return self._flat

    def slot_indices(self, key) -> np.ndarray:
        return self._offsets[key][1]

    def bump_version(self) -> None:
        self.version += 1
        if len(self._dist_cache) > (1 << 18):
            self._dist_cache.clear()
            self._mixed_cache.clear()
            self._forward_cache.clear()

    # -- distributions -----------------------------------------------------

    def _forward(self, key, history: tuple) -> tuple:
        """Network forward pass for a node, cached per parameter version.

        Returns ``(version, logits, features, hidden1, hidden2)``; the
        activations feed the manual backward pass.
        """
        hit = self._forward_cache.get(key)
        if hit is not None and hit[0] == self.version:
            return hit
        w1, b1, w2, b2, w3, b3 = self.weights
        x = self.view.features(history)
        h1 = np.maximum(x @ w1 + b1, 0.0)
        h2 = np.maximum(h1 @ w2 + b2, 0.0)
        out = h2 @ w3 + b3
        entry = (self.version, out, x, h1, h2)
        self._forward_cache[key] = entry
        return entry

    def _dist_entry(self, history: tuple):
        """Cached per-node data: (node, key, probs list, cum list over
        valid slots, probs ndarray)."""
        key = self.view.param_key(history)
        hit = self._dist_cache.get(key)
        if hit is not None and hit[0] == self.version:
            return hit
        node = self.view.node(history)
        if node.is_leaf:
            raise InconsistencyError("no distribution at a leaf node")
        n = len(node.items)
        if self.mode == "tabular":
            offset, _ = self._slot_range(key, n)
            logits = self._flat[offset : offset + n]
        else:
            logits = self._forward(key, history)[1]
        # Masked softmax over the valid slots, in plain Python: these
        # vectors are tiny and ufunc overhead dominates otherwise.
        valid = node.valid_slots
        vals = [logits[s] for s in valid]
        top = max(vals)
        exps = [math.exp(v - top) for v in vals]
        total = sum(exps)
        probs = [0.0] * n
        cum = []
        acc = 0.0
        for s, e in zip(valid, exps):
            p = e / total
            probs[s] = p
            acc += p
            cum.append(acc)
        cum[-1] = 1.0
        entry = (self.version, node, key, probs, cum)
        self._dist_cache[key] = entry
        return entry

    def _mixed_entry(self, history: tuple, eps: float):
        """Per-step exploration mixture: (1-eps) policy + eps uniform over
        the node's valid children."""
        key = self.view.param_key(history)
        hit = self._mixed_cache.get(key)
        if hit is not None and hit[0] == self.version and hit[1] == eps:
            return hit
        _, node, _, probs, _ = self._dist_entry(history)
        share = eps / len(node.valid_slots)
        keep = 1.0 - eps
        mixed = [0.0] * len(probs)
        cum = []
        acc = 0.0
        for s in node.valid_slots:
            p = keep * probs[s] + share
            mixed[s] = p
            acc += p
            cum.append(acc)
        cum[-1] = 1.0
        entry = (self.version, eps, node, key, mixed, cum)
        self._mixed_cache[key] = entry
        return entry

    def distribution(self, history: tuple, eps: float = 0.0) -> np.ndarray:
        """Conditional probabilities over the node's slots (full item
        vector; masked slots exactly zero)."""
        if eps == 0.0:
            return np.asarray(self._dist_entry(history)[3])
        return np.asarray(self._mixed_entry(history, eps)[4])

    # -- walks -------------------------------------------------------------

    def sample_walk(
        self, uniforms: UniformSource, eps: float = 0.0
    ) -> tuple[tuple, float, list]:
        """Draw one root-to-leaf walk; returns (action items, probability,
        step log).  The number of draws is bounded by the tree depth."""
        return self.walk_from((), uniforms, eps)

    def walk_from(
        self, history: tuple, uniforms: UniformSource, eps: float = 0.0
    ) -> tuple[tuple, float, list]:
        """Continue a walk from an interior node down to a leaf.  The
        returned items are the complete action (prefix included); the step
        log covers only the new decisions."""
        prob = 1.0
        steps: list[tuple[tuple, int]] = []
        view = self.view
        nxt = uniforms.next
        while True:
            node = view.node(history)
            if node.is_leaf:
                return history, prob, steps
            if eps == 0.0:
                _, node, _, probs, cum = self._dist_entry(history)
            else:
                _, _, node, _, probs, cum = self._mixed_entry(history, eps)
            idx = bisect_left(cum, nxt())
            if idx >= len(node.valid_slots):
                idx = len(node.valid_slots) - 1
            slot = node.valid_slots[idx]
            steps.append((history, slot))
            prob *= probs[slot]
            history = history + (node.items[slot],)

    def action_steps(self, items: tuple, eps: float = 0.0) -> tuple[float, list]:
        """Replay an action through the tree; returns its chain-rule
        probability and the step log for gradient replay."""
        history: tuple = ()
        prob = 1.0
        steps: list[tuple[tuple, int]] = []
        for item in items:
            node = self.view.node(history)
            if node.is_leaf:
                raise InconsistencyError(f"action {items} continues past a leaf")
            slot = node.slot_of.get(item)
            if slot is None:
                raise InconsistencyError(
                    f"action {items} takes masked-invalid child {item}"
                )
            if eps == 0.0:
                probs = self._dist_entry(history)[3]
            else:
                probs = self._mixed_entry(history, eps)[4]
            steps.append((history, slot))
            prob *= probs[slot]
            history = history + (item,)
        if not self.view.node(history).is_leaf:
            raise InconsistencyError(f"action {items} stops before a leaf")
        return prob, steps

    def steps_prob(self, steps: list, eps: float = 0.0) -> float:
        """Probability of a recorded walk under the (mixed) policy."""
        prob = 1.0
        if eps == 0.0:
            for history, slot in steps:
                prob *= self._dist_entry(history)[3][slot]
        else:
            for history, slot in steps:
                prob *= self._mixed_entry(history, eps)[4][slot]
        return prob

    # -- gradients -----------------------------------------------------------

    def zero_grad(self) -> GradientAccumulator:
        if self.mode == "network":
            return GradientAccumulator(
                network=[np.zeros_like(w) for w in self.weights]
            )
        return GradientAccumulator()

    def accumulate_log_prob_grad(
        self, acc: GradientAccumulator, steps: list, weight: float = 1.0
    ) -> None:
        """Add ``weight * grad(log prob(walk))`` to the accumulator.

        Per node the logit gradient is ``e_chosen - p`` restricted to
        unmasked slots, which is exact for the masked softmax.  Both modes
        only record per-node slot weights here; the heavy lifting happens
        once per batch in the optimizer's materialization.
        """
        for history, slot in steps:
            entry = self._dist_entry(history)
            acc.add_step(entry[2], slot, weight, entry[3], history)

    def backward_into(self, acc: GradientAccumulator) -> None:
        """Batched backward pass turning the accumulator's pending per-node
        logit gradients into network weight gradients.

        The backward map is linear in the per-node logit gradient for
        fixed activations, so summing per node before one stacked pass is
        exact.
        """
        if not acc.pending:
            return
        w1, b1, w2, b2, w3, b3 = self.weights
        rows_x, rows_h1, rows_h2, rows_d = [], [], [], []
        for key, (total, slots, probs_list, history) in acc.pending.items():
            _, _, x, h1, h2 = self._forward(key, history)
            d = np.zeros(self.mask_width)
            d[: len(probs_list)] = probs_list
            d *= -total
            for slot, w in slots.items():
                d[slot] += w
            rows_x.append(x)
            rows_h1.append(h1)
            rows_h2.append(h2)
            rows_d.append(d)
        X = np.stack(rows_x)
        H1 = np.stack(rows_h1)
        H2 = np.stack(rows_h2)
        D = np.stack(rows_d)
        g1, gb1, g2, gb2, g3, gb3 = acc.network
        g3 += H2.T @ D
        gb3 += D.sum(axis=0)
        dH2 = (D @ w3.T) * (H2 > 0.0)
        g2 += H1.T @ dH2
        gb2 += dH2.sum(axis=0)
        dH1 = (dH2 @ w2.T) * (H1 > 0.0)
        g1 += X.T @ dH1
        gb1 += dH1.sum(axis=0)
        acc.pending.clear()


# -- optimizers -------------------------------------------------------------


def _flatten_tabular(policy: TreePolicy, grad: GradientAccumulator):
    """Concatenate a batch's touched-slot indices and gradient values."""
    idx_parts = []
    val_parts = []
    for key, vec in grad.materialized().items():
        _, indices = policy._slot_range(key, len(vec))
        idx_parts.append(indices)
        val_parts.append(vec)
    if not idx_parts:
        return None, None
    idx = np.concatenate(idx_parts)
    vals = np.concatenate(val_parts)
    if not np.all(np.isfinite(vals)):
        raise TrainingAbortError("non-finite tabular gradient")
    return idx, vals


class SgdOptimizer:
    """Plain gradient descent; used where tests need exact expectations."""

    def __init__(self):
        self.step_count = 0

    def apply(self, policy: TreePolicy, grad: GradientAccumulator, lr: float) -> None:
        self.step_count += 1
        if policy.mode == "tabular":
            idx, vals = _flatten_tabular(policy, grad)
            if idx is not None:
                policy._flat[idx] -= lr * vals
        else:
            policy.backward_into(grad)
            _check_finite_network(grad)
            for w, g in zip(policy.weights, grad.network):
                w -= lr * g
        policy.bump_version()


class AdamOptimizer:
    """Adaptive-moment descent (0.9 / 0.999 / 1e-8, bias-corrected).

    Tabular moments live in flat arrays parallel to the parameter store
    and advance only for slots that receive a gradient (sparse Adam
    semantics); network moments are dense.
    """

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = np.zeros(0)
        self._v = np.zeros(0)
        self._t = np.zeros(0)
        self._net_state: list | None = None

    def _sync_size(self, n: int) -> None:
        if len(self._m) < n:
            grow = max(n, 2 * len(self._m))
            for name in ("_m", "_v", "_t"):
                old = getattr(self, name)
                new = np.zeros(grow)
                new[: len(old)] = old
                setattr(self, name, new)

    def apply(self, policy: TreePolicy, grad: GradientAccumulator, lr: float) -> None:
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        if policy.mode == "tabular":
            idx, vals = _flatten_tabular(policy, grad)
            if idx is not None:
                self._sync_size(len(policy._flat))
                t = self._t[idx] + 1.0
                self._t[idx] = t
                m = b1 * self._m[idx] + (1 - b1) * vals
                v = b2 * self._v[idx] + (1 - b2) * vals * vals
                self._m[idx] = m
                self._v[idx] = v
                mhat = m / (1.0 - b1**t)
                vhat = v / (1.0 - b2**t)
                policy._flat[idx] -= lr * mhat / (np.sqrt(vhat) + self.eps)
        else:
            policy.backward_into(grad)
            _check_finite_network(grad)
            if self._net_state is None:
                self._net_state = [
                    [np.zeros_like(w), np.zeros_like(w)] for w in policy.weights
                ]
            t = self.step_count
            for w, g, (m, v) in zip(policy.weights, grad.network, self._net_state):
                m *= b1
                m += (1 - b1) * g
                v *= b2
                v += (1 - b2) * g * g
                mhat = m / (1 - b1**t)
                vhat = v / (1 - b2**t)
                w -= lr * mhat / (np.sqrt(vhat) + self.eps)
        policy.bump_version()


def make_optimizer(kind: str):
    if kind == "sgd":
        return SgdOptimizer()
    if kind == "adam":
        return AdamOptimizer()
    raise ValueError(f"unknown optimizer {kind!r}")


def _check_finite_network(grad: GradientAccumulator) -> None:
    if grad.network is not None:
        for i, g in enumerate(grad.network):
            if not np.all(np.isfinite(g)):
                raise TrainingAbortError(f"non-finite gradient in network tensor {i}")


# -- spec-level operations ---------------------------------------------------


def conditional_distribution(policy: TreePolicy, history: tuple, mask=None) -> np.ndarray:
    """Masked normalized-exponential distribution at one node.

    With an explicit mask the policy's logits are re-normalized over that
    mask instead of the node's own validity flags.
    """
    if mask is None:
        return policy.distribution(tuple(history))
    bits = tuple(mask.bits) if hasattr(mask, "bits") else tuple(mask)
    history = tuple(history)
    key = policy.view.param_key(history)
    node = policy.view.node(history)
    if policy.mode == "tabular":
        logits = policy.get_logits(key, len(node.items))
    else:
        logits = policy._forward(key, history)[1]
    return masked_softmax(logits, bits[: len(node.items)])


def action_probability(policy: TreePolicy, action) -> tuple[float, list]:
    """Chain-rule probability of a complete action plus its step log."""
    items = policy.view.action_items(action)
    return policy.action_steps(items)


def sample_action(policy: TreePolicy, rng) -> tuple[tuple, float, list]:
    """Draw one action with exactly the chain-rule probability."""
    uniforms = rng if isinstance(rng, UniformSource) else UniformSource(rng)
    return policy.sample_walk(uniforms)


def action_log_prob_grad(policy: TreePolicy, step_log: list) -> GradientAccumulator:
    """Exact gradient of ``log prob(action)`` for all parameters."""
    acc = policy.zero_grad()
    policy.accumulate_log_prob_grad(acc, step_log, 1.0)
    if policy.mode == "network":
        policy.backward_into(acc)
    return acc


def apply_update(policy: TreePolicy, grad: GradientAccumulator, optimizer, learning_rate: float) -> None:
    optimizer.apply(policy, grad, learning_rate)


# -- checkpoints --------------------------------------------------------------


def save_policy(policy: TreePolicy, path: str, fingerprint: str) -> None:
    payload = {
        "schema": CHECKPOINT_SCHEMA,
        "mode": policy.mode,
        "mask_width": policy.mask_width,
        "fingerprint": fingerprint,
        "logits": sorted(
            (json.dumps(_key_to_json(k)), [float(x) for x in v])
            for k, v in policy.logit_table().items()
        ),
        "weights": [w.tolist() for w in policy.weights],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_policy(path: str, view, fingerprint: str, mode: str | None = None) -> TreePolicy:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("schema") != CHECKPOINT_SCHEMA:
        raise CheckpointError(f"unknown checkpoint schema {payload.get('schema')!r}")
    if payload["fingerprint"] != fingerprint:
        raise CheckpointError(
            f"checkpoint fingerprint {payload['fingerprint']} does not match "
            f"instance {fingerprint}"
        )
    if mode is not None and mode != payload["mode"]:
        raise CheckpointError(f"checkpoint mode {payload['mode']!r}, expected {mode!r}")
    policy = TreePolicy(view, mode=payload["mode"], seed=0)
    for raw, vals in payload["logits"]:
        policy.set_logits(_key_from_json(json.loads(raw)), vals)
    if payload["mode"] == "network":
        policy.weights = [np.asarray(w, dtype=np.float64) for w in payload["weights"]]
    policy.bump_version()
    return policy


def _key_to_json(key):
    if isinstance(key, tuple):
        return [_key_to_json(k) for k in key]
    return key


def _key_from_json(obj):
    if isinstance(obj, list):
        return tuple(_key_from_json(o) for o in obj)
    return obj
