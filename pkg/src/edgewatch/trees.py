"""Decision-tree views over the two action spaces.

Neither tree is materialized: children are generated on demand from the
history that identifies a node, and memoized.  An attacker node is the
ordered tuple of visited vertices; a defender node is the ordered tuple
of edges already placed.  Every root-to-leaf walk is one pure action.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import EnumerationOverflowError, InstanceMismatchError
from .graphs import (
    DEFAULT_ENUMERATION_CAP,
    DefenderSpec,
    Edge,
    GameGraph,
)


@dataclass(frozen=True)
class AttackerHistory:
    """Ordered vertices visited so far; empty at the root."""

    visited: tuple[int, ...] = ()

    @property
    def current(self) -> int | None:
        return self.visited[-1] if self.visited else None


@dataclass(frozen=True)
class DefenderHistory:
    """Edges already placed; the next defender to act is ``depth``."""

    chosen: tuple[Edge, ...] = ()

    @property
    def depth(self) -> int:
        return len(self.chosen)


@dataclass(frozen=True)
class ActionMask:
    """Fixed-width validity bits for one decision node."""

    bits: tuple[bool, ...]

    def __post_init__(self) -> None:
        if len(self.bits) and not any(self.bits):
            raise InstanceMismatchError("action mask with zero valid children")


class NodeInfo:
    """Memoized per-node data: slot items, validity flags, leaf marker."""

    __slots__ = ("items", "valid", "valid_slots", "valid_items", "slot_of", "is_leaf")

    def __init__(self, items: tuple, valid: tuple[bool, ...], is_leaf: bool):
        self.items = items
        self.valid = valid
        self.valid_slots = tuple(i for i, ok in enumerate(valid) if ok)
        self.valid_items = tuple(items[i] for i in self.valid_slots)
        self.slot_of = {items[i]: i for i in self.valid_slots}
        self.is_leaf = is_leaf


class AttackerTreeView:
    """Attacker decision tree: pick a start vertex, then extend the simple
    path one neighbor at a time until a target terminates it.

    A neighbor is a valid child when it is unvisited and some target stays
    reachable from it, within the remaining length budget, after deleting
    all visited vertices.  Target children are leaves.
    """

    def __init__(self, graph: GameGraph):
        self.graph = graph
        self.mask_width = max(graph.max_degree, len(graph.start_vertices))
        self._nodes: dict[tuple[int, ...], NodeInfo] = {}
        self._static_dist = self._multi_source_distances()
        self.feature_dim = 2 * graph.vertex_count + 1

    def _multi_source_distances(self) -> list[int]:
        g = self.graph
        inf = g.vertex_count + 1
        dist = [inf] * g.vertex_count
        frontier = deque()
        for t in g.target_vertices:
            dist[t] = 0
            frontier.append(t)
        while frontier:
            v = frontier.popleft()
            for w in g.adjacency[v]:
                if dist[w] > dist[v] + 1:
                    dist[w] = dist[v] + 1
                    frontier.append(w)
        return dist

    def node(self, visited: tuple[int, ...]) -> NodeInfo:
        info = self._nodes.get(visited)
        if info is None:
            info = self._expand(visited)
            self._nodes[visited] = info
        return info

    def _expand(self, visited: tuple[int, ...]) -> NodeInfo:
        g = self.graph
        if not visited:
            items = g.start_vertices
            budget = g.max_path_length - 1
            valid = tuple(
                self._static_dist[s] <= budget and self._reachable(s, frozenset(), budget)
                for s in items
            )
            return NodeInfo(items, valid, is_leaf=False)
        current = visited[-1]
        if current in g.target_set:
            return NodeInfo((), (), is_leaf=True)
        items = g.adjacency[current]
        budget = g.max_path_length - len(visited) - 1
        if budget < 0:
            # Unreachable for nodes generated through valid parents.
            return NodeInfo(items, tuple(False for _ in items), is_leaf=False)
        blocked = frozenset(visited)
        valid = []
        for w in items:
            if w in blocked or self._static_dist[w] > budget:
                valid.append(False)
            elif w in g.target_set:
                valid.append(True)
            else:
                valid.append(budget > 0 and self._reachable(w, blocked, budget))
        return NodeInfo(items, tuple(valid), is_leaf=False)

    def _reachable(self, source: int, blocked: frozenset[int], budget: int) -> bool:
        """Depth-bounded BFS: does some target lie within ``budget`` edges of
        ``source`` in the graph with ``blocked`` vertices removed?"""
        g = self.graph
        if source in g.target_set:
            return True
        seen = {source}
        frontier = deque([(source, 0)])
        while frontier:
            v, d = frontier.popleft()
            if d == budget:
                continue
            for w in g.adjacency[v]:
                if w in seen or w in blocked:
                    continue
                if w in g.target_set:
                    return True
                seen.add(w)
                frontier.append((w, d + 1))
        return False

    def mask(self, visited: tuple[int, ...]) -> ActionMask:
        info = self.node(visited)
        bits = list(info.valid) + [False] * (self.mask_width - len(info.items))
        return ActionMask(tuple(bits))

    def param_key(self, visited: tuple[int, ...]) -> tuple[int, ...]:
        """Tabular parameters are keyed by the exact visited sequence."""
        return visited

    def action_items(self, action) -> tuple[int, ...]:
        return tuple(action.path)

    def features(self, visited: tuple[int, ...]) -> np.ndarray:
        """Network-mode node encoding: one-hot current vertex, visited
        bitmap, and the normalized remaining length budget."""
        g = self.graph
        x = np.zeros(self.feature_dim, dtype=np.float64)
        if visited:
            x[visited[-1]] = 1.0
            for v in visited:
                x[g.vertex_count + v] = 1.0
        x[-1] = (g.max_path_length - len(visited)) / g.max_path_length
        return x


class DefenderTreeView:
    """Defender decision tree: one level per team member, children drawn
    from the unified candidate-edge space with per-level masking."""

    def __init__(self, spec: DefenderSpec):
        self.spec = spec
        self.union_edges = spec.union_edges
        self.mask_width = len(self.union_edges)
        self._level_sets = [frozenset(edges) for edges in spec.candidate_edges]
        self._nodes: dict[tuple[Edge, ...], NodeInfo] = {}
        self.feature_dim = spec.num_defenders + self.mask_width

    def node(self, chosen: tuple[Edge, ...]) -> NodeInfo:
        info = self._nodes.get(chosen)
        if info is None:
            info = self._expand(chosen)
            self._nodes[chosen] = info
        return info

    def _expand(self, chosen: tuple[Edge, ...]) -> NodeInfo:
        depth = len(chosen)
        if depth >= self.spec.num_defenders:
            return NodeInfo((), (), is_leaf=True)
        allowed = self._level_sets[depth]
        if self.spec.allow_duplicate_edges:
            valid = tuple(e in allowed for e in self.union_edges)
        else:
            taken = set(chosen)
            valid = tuple(e in allowed and e not in taken for e in self.union_edges)
        return NodeInfo(self.union_edges, valid, is_leaf=False)

    def mask(self, chosen: tuple[Edge, ...]) -> ActionMask:
        return ActionMask(self.node(chosen).valid)

    def param_key(self, chosen: tuple[Edge, ...]) -> tuple:
        """Tabular parameters are keyed by depth plus the placed-edge
        multiset; placement order never changes the node's distribution."""
        return (len(chosen),) + tuple(sorted(chosen))

    def action_items(self, action) -> tuple[Edge, ...]:
        return tuple(action.edges)

    def features(self, chosen: tuple[Edge, ...]) -> np.ndarray:
        """Network-mode node encoding: one-hot acting defender plus the
        bitmap of edges already placed."""
        x = np.zeros(self.feature_dim, dtype=np.float64)
        depth = len(chosen)
        if depth < self.spec.num_defenders:
            x[depth] = 1.0
        offset = self.spec.num_defenders
        for e in chosen:
            x[offset + self.union_edges.index(e)] = 1.0
        return x


# -- spec-level operations -------------------------------------------------


def attacker_valid_actions(graph: GameGraph, history: AttackerHistory) -> set[int]:
    """Valid next vertices from an attacker history (empty only at leaves)."""
    _check_attacker_history(graph, history)
    view = AttackerTreeView(graph)
    return set(view.node(history.visited).valid_items)


def defender_valid_actions(spec: DefenderSpec, history: DefenderHistory) -> set[Edge]:
    """Valid edges for the defender about to act."""
    if history.depth >= spec.num_defenders:
        raise InstanceMismatchError(
            f"defender history depth {history.depth} has no member left to act"
        )
    for i, e in enumerate(history.chosen):
        if e not in spec.candidate_edges[i]:
            raise InstanceMismatchError(f"history edge {e} invalid for defender {i}")
    view = DefenderTreeView(spec)
    return set(view.node(history.chosen).valid_items)


def _check_attacker_history(graph: GameGraph, history: AttackerHistory) -> None:
    visited = history.visited
    if len(set(visited)) != len(visited):
        raise InstanceMismatchError(f"history {visited} repeats a vertex")
    if visited and visited[0] not in graph.start_set:
        raise InstanceMismatchError(f"history {visited} does not begin at a start")
    for i in range(len(visited) - 1):
        if visited[i + 1] not in graph.adjacency[visited[i]]:
            raise InstanceMismatchError(f"history {visited} breaks adjacency at {i}")


def count_leaves(
    graph: GameGraph,
    spec: DefenderSpec,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> tuple[int, int]:
    """Leaf counts of both trees by traversal; they must equal the action
    enumeration counts."""
    attacker = _count_tree_leaves(AttackerTreeView(graph), (), cap)
    defender = _count_tree_leaves(DefenderTreeView(spec), (), cap)
    return attacker, defender


def _count_tree_leaves(view, root, cap: int) -> int:
    count = 0
    stack = [root]
    while stack:
        history = stack.pop()
        info = view.node(history)
        if info.is_leaf:
            count += 1
            if count > cap:
                raise EnumerationOverflowError(f"leaf count exceeded cap {cap}")
            continue
        for item in info.valid_items:
            stack.append(history + (item,))
    return count
