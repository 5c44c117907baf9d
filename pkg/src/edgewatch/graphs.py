"""Game instances: road-network graphs, pure actions, payoffs, enumeration.

A game instance couples an undirected road network with a team of edge
defenders.  The attacker picks a simple path from a start vertex to a
target vertex; each defender places one resource on an edge of its
candidate set.  The attacker wins the target value if no defended edge
lies on the path, and loses the same amount otherwise.
"""

from __future__ import annotations

import hashlib
import itertools
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EnumerationOverflowError,
    GenerationError,
    InstanceError,
    InstanceMismatchError,
)

Edge = tuple[int, int]

#: Exact operations refuse to enumerate more actions than this per side.
DEFAULT_ENUMERATION_CAP = 1_000_000

#: Feasibility retries used by the seeded generators.
MAX_GENERATION_ATTEMPTS = 100


def normalize_edge(u: int, v: int) -> Edge:
    """Roads are undirected; store every edge as a (min, max) vertex pair."""
    if u == v:
        raise InstanceError(f"self-loop edge ({u}, {v}) is not allowed")
    return (u, v) if u < v else (v, u)


class GameGraph:
    """Undirected road network with start set, target set and target values.

    ``max_path_length`` caps the number of *vertices* on an attacker path.
    """

    def __init__(
        self,
        vertex_count: int,
        edges: list[Edge],
        start_vertices: list[int],
        target_vertices: list[int],
        target_values: dict[int, float],
        max_path_length: int,
    ):
        self.vertex_count = int(vertex_count)
        self.edges = tuple(sorted({normalize_edge(u, v) for u, v in edges}))
        self.start_vertices = tuple(sorted(set(start_vertices)))
        self.target_vertices = tuple(sorted(set(target_vertices)))
        self.target_values = {int(v): float(target_values[v]) for v in self.target_vertices}
        self.max_path_length = int(max_path_length)
        self._validate_structure()

        adjacency: list[list[int]] = [[] for _ in range(self.vertex_count)]
        for u, v in self.edges:
            adjacency[u].append(v)
            adjacency[v].append(u)
        self.adjacency: tuple[tuple[int, ...], ...] = tuple(
            tuple(sorted(nbrs)) for nbrs in adjacency
        )
        self.edge_index: dict[Edge, int] = {e: i for i, e in enumerate(self.edges)}
        self.target_set = frozenset(self.target_vertices)
        self.start_set = frozenset(self.start_vertices)
        self.max_degree = max((len(n) for n in self.adjacency), default=0)
        self._validate_feasibility()

    # -- invariants ------------------------------------------------------

    def _validate_structure(self) -> None:
        if self.vertex_count <= 0:
            raise InstanceError("vertex_count must be positive")
        for u, v in self.edges:
            if not (0 <= u < self.vertex_count and 0 <= v < self.vertex_count):
                raise InstanceError(f"edge ({u}, {v}) has an endpoint >= vertex_count")
        if not self.start_vertices:
            raise InstanceError("start vertex set is empty")
        if not self.target_vertices:
            raise InstanceError("target vertex set is empty")
        overlap = set(self.start_vertices) & set(self.target_vertices)
        if overlap:
            raise InstanceError(f"start and target sets overlap: {sorted(overlap)}")
        for v in itertools.chain(self.start_vertices, self.target_vertices):
            if not 0 <= v < self.vertex_count:
                raise InstanceError(f"vertex {v} out of range")
        for v, value in self.target_values.items():
            if value <= 0:
                raise InstanceError(f"target {v} has non-positive value {value}")
        if set(self.target_values) != set(self.target_vertices):
            raise InstanceError("target_values must cover exactly the target vertices")
        if self.max_path_length < 2:
            raise InstanceError("max_path_length must allow at least two vertices")

    def _validate_feasibility(self) -> None:
        if not any(
            self.distance_to_target(s, forbidden=frozenset()) <= self.max_path_length - 1
            for s in self.start_vertices
        ):
            raise InstanceError(
                "no start vertex reaches a target within max_path_length"
            )

    # -- queries ---------------------------------------------------------

    def distance_to_target(self, source: int, forbidden: frozenset[int]) -> int:
        """BFS edge-distance from ``source`` to the nearest target, avoiding
        ``forbidden`` vertices.  Returns a large sentinel when unreachable."""
        if source in self.target_set:
            return 0
        seen = {source}
        frontier = deque([(source, 0)])
        while frontier:
            v, d = frontier.popleft()
            for w in self.adjacency[v]:
                if w in seen or w in forbidden:
                    continue
                if w in self.target_set:
                    return d + 1
                seen.add(w)
                frontier.append((w, d + 1))
        return self.vertex_count + 1

    def value_of(self, target: int) -> float:
        return self.target_values[target]

    def canonical_form(self) -> dict:
        return {
            "vertex_count": self.vertex_count,
            "edges": [list(e) for e in self.edges],
            "start_vertices": list(self.start_vertices),
            "target_vertices": list(self.target_vertices),
            "target_values": {str(v): self.target_values[v] for v in self.target_vertices},
            "max_path_length": self.max_path_length,
        }


@dataclass(frozen=True)
class AttackerAction:
    """A simple start-to-target path, stored as the ordered vertex list."""

    path: tuple[int, ...]

    def edges(self) -> frozenset[Edge]:
        return frozenset(
            normalize_edge(self.path[i], self.path[i + 1])
            for i in range(len(self.path) - 1)
        )


@dataclass(frozen=True)
class DefenderAction:
    """One edge per defender, in defender order."""

    edges: tuple[Edge, ...]


class DefenderSpec:
    """Per-defender candidate edge sets (the team's factored action space)."""

    def __init__(
        self,
        candidate_edges: list[list[Edge]],
        allow_duplicate_edges: bool = True,
    ):
        if not candidate_edges:
            raise InstanceError("defender team must have at least one member")
        self.candidate_edges: tuple[tuple[Edge, ...], ...] = tuple(
            tuple(sorted({normalize_edge(u, v) for u, v in edges}))
            for edges in candidate_edges
        )
        self.allow_duplicate_edges = bool(allow_duplicate_edges)
        for i, edges in enumerate(self.candidate_edges):
            if not edges:
                raise InstanceError(f"defender {i} has an empty candidate set")
        self.num_defenders = len(self.candidate_edges)
        self.union_edges: tuple[Edge, ...] = tuple(
            sorted(set(itertools.chain.from_iterable(self.candidate_edges)))
        )
        if not self.allow_duplicate_edges and not self._has_distinct_assignment():
            raise InstanceError(
                "no duplicate-free assignment exists for the candidate sets"
            )

    def _has_distinct_assignment(self) -> bool:
        used: set[Edge] = set()

        def assign(i: int) -> bool:
            if i == self.num_defenders:
                return True
            for e in self.candidate_edges[i]:
                if e not in used:
                    used.add(e)
                    if assign(i + 1):
                        return True
                    used.discard(e)
            return False

        return assign(0)

    def validate_against(self, graph: GameGraph) -> None:
        for i, edges in enumerate(self.candidate_edges):
            for e in edges:
                if e not in graph.edge_index:
                    raise InstanceError(f"defender {i} candidate {e} is not a graph edge")

    def canonical_form(self) -> dict:
        return {
            "candidate_edges": [[list(e) for e in edges] for edges in self.candidate_edges],
            "allow_duplicate_edges": self.allow_duplicate_edges,
        }


@dataclass
class GameInstance:
    """A graph plus its defender team; the unit every solver consumes."""

    graph: GameGraph
    defenders: DefenderSpec

    def __post_init__(self) -> None:
        self.defenders.validate_against(self.graph)

    def fingerprint(self) -> str:
        blob = repr((self.graph.canonical_form(), self.defenders.canonical_form()))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class MixedStrategy:
    """Probability vector over an enumerated action list."""

    probabilities: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.probabilities, dtype=np.float64)
        if p.ndim != 1:
            raise InstanceError("mixed strategy must be a 1-d probability vector")
        if np.any(p < 0):
            raise InstanceError("mixed strategy has a negative entry")
        if abs(float(p.sum()) - 1.0) > 1e-9:
            raise InstanceError(f"mixed strategy sums to {p.sum()!r}, not 1")
        self.probabilities = p

    def __len__(self) -> int:
        return len(self.probabilities)


# -- action validity -----------------------------------------------------


def validate_attacker_action(graph: GameGraph, action: AttackerAction) -> None:
    """Raise :class:`InstanceMismatchError` unless the path is a valid pure
    attacker action: simple, adjacent, start-to-target, within the length
    cap, and terminating at the first target it touches."""
    path = action.path
    if len(path) < 2:
        raise InstanceMismatchError(f"path {path} is too short")
    if len(path) > graph.max_path_length:
        raise InstanceMismatchError(f"path {path} exceeds max_path_length")
    if path[0] not in graph.start_set:
        raise InstanceMismatchError(f"path {path} does not begin at a start vertex")
    if path[-1] not in graph.target_set:
        raise InstanceMismatchError(f"path {path} does not end at a target vertex")
    if len(set(path)) != len(path):
        raise InstanceMismatchError(f"path {path} repeats a vertex")
    for i in range(len(path) - 1):
        if path[i + 1] not in graph.adjacency[path[i]]:
            raise InstanceMismatchError(f"path {path} uses a missing edge at step {i}")
    # Paths terminate on first contact with a target.
    for v in path[1:-1]:
        if v in graph.target_set:
            raise InstanceMismatchError(f"path {path} passes through target {v}")


def validate_defender_action(spec: DefenderSpec, action: DefenderAction) -> None:
    if len(action.edges) != spec.num_defenders:
        raise InstanceMismatchError(
            f"action has {len(action.edges)} edges for {spec.num_defenders} defenders"
        )
    for i, e in enumerate(action.edges):
        if e != normalize_edge(*e) or e not in spec.candidate_edges[i]:
            raise InstanceMismatchError(f"edge {e} is not a candidate of defender {i}")
    if not spec.allow_duplicate_edges and len(set(action.edges)) != len(action.edges):
        raise InstanceMismatchError("duplicate edges are disallowed for this team")


# -- payoffs -------------------------------------------------------------


def attacker_utility(
    graph: GameGraph,
    a_att: AttackerAction,
    a_def: DefenderAction,
    spec: DefenderSpec | None = None,
) -> float:
    """Signed attacker payoff: +value on a clean run, -value on interception.

    The defender's utility is the exact negation (zero-sum game).
    """
    validate_attacker_action(graph, a_att)
    if spec is not None:
        validate_defender_action(spec, a_def)
    value = graph.value_of(a_att.path[-1])
    path_edges = a_att.edges()
    intercepted = any(e in path_edges for e in a_def.edges)
    return -value if intercepted else value


def payoff_matrix(
    graph: GameGraph,
    attacker_actions: list[AttackerAction],
    defender_actions: list[DefenderAction],
) -> np.ndarray:
    """Dense attacker-payoff matrix, rows = attacker actions."""
    n_e = len(graph.edges)
    inc = np.zeros((len(attacker_actions), n_e), dtype=np.float32)
    values = np.empty(len(attacker_actions), dtype=np.float64)
    for i, a in enumerate(attacker_actions):
        for e in a.edges():
            inc[i, graph.edge_index[e]] = 1.0
        values[i] = graph.value_of(a.path[-1])
    cover = np.zeros((len(defender_actions), n_e), dtype=np.float32)
    for j, d in enumerate(defender_actions):
        for e in d.edges:
            cover[j, graph.edge_index[e]] = 1.0
    intercepted = (inc @ cover.T) > 0.5
    return values[:, None] * np.where(intercepted, -1.0, 1.0)


def expected_utility(
    att: MixedStrategy | np.ndarray,
    dfn: MixedStrategy | np.ndarray,
    payoff: np.ndarray,
    player: str = "attacker",
) -> float:
    """Bilinear expected utility under a mixed profile (negated for the
    defender, the game being zero-sum)."""
    x = att.probabilities if isinstance(att, MixedStrategy) else np.asarray(att, dtype=np.float64)
    y = dfn.probabilities if isinstance(dfn, MixedStrategy) else np.asarray(dfn, dtype=np.float64)
    if payoff.shape != (len(x), len(y)):
        raise InstanceMismatchError(
            f"payoff shape {payoff.shape} does not match strategies ({len(x)}, {len(y)})"
        )
    value = float(x @ payoff @ y)
    if player == "attacker":
        return value
    if player == "defender":
        return -value
    raise ValueError(f"unknown player {player!r}")


# -- enumeration ---------------------------------------------------------


def enumerate_attacker_actions(
    graph: GameGraph, cap: int = DEFAULT_ENUMERATION_CAP, work_cap: int | None = None
) -> list[AttackerAction]:
    """Every simple start-to-target path within the length cap, in
    deterministic lexicographic order.

    Static distance-to-target pruning keeps the search affordable; it never
    changes the result, only skips subtrees that cannot complete a path.
    ``work_cap`` bounds the number of search-tree expansions so instances
    far beyond the cap refuse quickly instead of walking a huge graph.
    """
    static_dist = _static_target_distances(graph)
    out: list[AttackerAction] = []
    limit = graph.max_path_length
    budget_left = work_cap if work_cap is not None else max(4 * cap, 2_000_000)
    work = [budget_left]

    def extend(path: list[int], on_path: set[int]) -> None:
        work[0] -= 1
        if work[0] < 0:
            raise EnumerationOverflowError(
                "attacker enumeration exceeded its search-work budget"
            )
        v = path[-1]
        if v in graph.target_set:
            out.append(AttackerAction(tuple(path)))
            if len(out) > cap:
                raise EnumerationOverflowError(
                    f"attacker enumeration exceeded cap {cap}"
                )
            return
        if len(path) == limit:
            return
        budget = limit - len(path) - 1
        for w in graph.adjacency[v]:
            if w in on_path or static_dist[w] > budget:
                continue
            path.append(w)
            on_path.add(w)
            extend(path, on_path)
            path.pop()
            on_path.discard(w)

    for s in graph.start_vertices:
        if static_dist[s] > limit - 1:
            continue
        extend([s], {s})
    return out


def _static_target_distances(graph: GameGraph) -> list[int]:
    """Multi-source BFS distance from every vertex to the nearest target."""
    inf = graph.vertex_count + 1
    dist = [inf] * graph.vertex_count
    frontier = deque()
    for t in graph.target_vertices:
        dist[t] = 0
        frontier.append(t)
    while frontier:
        v = frontier.popleft()
        for w in graph.adjacency[v]:
            if dist[w] > dist[v] + 1:
                dist[w] = dist[v] + 1
                frontier.append(w)
    return dist


def enumerate_defender_actions(
    spec: DefenderSpec, cap: int = DEFAULT_ENUMERATION_CAP
) -> list[DefenderAction]:
    """Cartesian product of candidate sets (minus duplicate tuples when the
    team disallows them), in deterministic lexicographic order."""
    size = 1
    for edges in spec.candidate_edges:
        size *= len(edges)
        if size > cap:
            raise EnumerationOverflowError(f"defender enumeration exceeded cap {cap}")
    out = []
    for combo in itertools.product(*spec.candidate_edges):
        if not spec.allow_duplicate_edges and len(set(combo)) != len(combo):
            continue
        out.append(DefenderAction(combo))
    if len(out) > cap:
        raise EnumerationOverflowError(f"defender enumeration exceeded cap {cap}")
    return out


def estimate_enumerable(
    instance: GameInstance, cap: int = DEFAULT_ENUMERATION_CAP
) -> bool:
    """Cheap check that both sides enumerate below the cap."""
    size = 1
    for edges in instance.defenders.candidate_edges:
        size *= len(edges)
        if size > cap:
            return False
    try:
        enumerate_attacker_actions(instance.graph, cap=cap)
    except EnumerationOverflowError:
        return False
    except RecursionError:
        return False
    return True


# -- graph file format ---------------------------------------------------

GRAPH_DIRECTIVES = ("nodes", "edge", "start", "target", "maxlen")


def parse_graph_file(text: str) -> GameGraph:
    """Parse the plain-text graph format.

    Grammar (one directive per line, ``#`` comments and blanks ignored)::

        nodes <n>
        edge <u> <v>
        start <v> [<v> ...]
        target <v> <value>
        maxlen <L>          # optional, defaults to <n>

    Unknown directives are rejected.
    """
    nodes: int | None = None
    edges: list[Edge] = []
    starts: list[int] = []
    targets: dict[int, float] = {}
    maxlen: int | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        directive, args = parts[0], parts[1:]
        try:
            if directive == "nodes":
                nodes = int(args[0])
            elif directive == "edge":
                edges.append(normalize_edge(int(args[0]), int(args[1])))
            elif directive == "start":
                starts.extend(int(a) for a in args)
            elif directive == "target":
                targets[int(args[0])] = float(args[1])
            elif directive == "maxlen":
                maxlen = int(args[0])
            else:
                raise InstanceError(
                    f"graph file line {lineno}: unknown directive {directive!r}"
                )
        except (IndexError, ValueError) as exc:
            raise InstanceError(f"graph file line {lineno}: {exc}") from exc
    if nodes is None:
        raise InstanceError("graph file is missing the 'nodes' directive")
    return GameGraph(
        vertex_count=nodes,
        edges=edges,
        start_vertices=starts,
        target_vertices=sorted(targets),
        target_values=targets,
        max_path_length=maxlen if maxlen is not None else nodes,
    )


def write_graph_file(graph: GameGraph) -> str:
    lines = [f"nodes {graph.vertex_count}"]
    lines.extend(f"edge {u} {v}" for u, v in graph.edges)
    lines.append("start " + " ".join(str(v) for v in graph.start_vertices))
    lines.extend(
        f"target {v} {graph.target_values[v]!r}" for v in graph.target_vertices
    )
    lines.append(f"maxlen {graph.max_path_length}")
    return "\n".join(lines) + "\n"


# -- seeded generators ---------------------------------------------------


def generate_graph(kind: str, params: dict, seed: int) -> GameGraph:
    """Deterministic seeded graph generation.

    Kinds: ``random`` (connected, exact node/edge counts), ``grid``
    (rows x cols lattice), ``file`` (parse an explicit edge list).
    Start/target placement retries derived seeds until a feasible
    instance appears, then gives up after 100 attempts.
    """
    if kind == "file":
        with open(params["path"], encoding="utf-8") as fh:
            return parse_graph_file(fh.read())
    last_error: Exception | None = None
    for attempt in range(MAX_GENERATION_ATTEMPTS):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(attempt,)))
        try:
            if kind == "random":
                return _generate_random(params, rng)
            if kind == "grid":
                return _generate_grid(params, rng)
            raise GenerationError(f"unknown generator kind {kind!r}")
        except InstanceError as exc:
            last_error = exc
    raise GenerationError(
        f"no feasible instance after {MAX_GENERATION_ATTEMPTS} attempts: {last_error}"
    )


def _place_and_build(
    n: int, edges: list[Edge], params: dict, rng: np.random.Generator
) -> GameGraph:
    explicit_starts = params.get("start_vertices")
    explicit_targets = params.get("target_vertices")
    if explicit_starts is not None and explicit_targets is not None:
        starts = [int(v) for v in explicit_starts]
        targets = [int(v) for v in explicit_targets]
    else:
        num_starts = int(params.get("num_starts", 1))
        num_targets = int(params.get("num_targets", 1))
        chosen = rng.choice(n, size=num_starts + num_targets, replace=False)
        starts = [int(v) for v in chosen[:num_starts]]
        targets = [int(v) for v in chosen[num_starts:]]
    raw_values = params.get("target_values", 1.0)
    if isinstance(raw_values, (int, float)):
        values = {t: float(raw_values) for t in targets}
    else:
        if len(raw_values) != len(targets):
            raise GenerationError("target_values length does not match target count")
        values = {t: float(val) for t, val in zip(sorted(targets), raw_values)}
    graph = GameGraph(
        vertex_count=n,
        edges=edges,
        start_vertices=starts,
        target_vertices=targets,
        target_values=values,
        max_path_length=int(params.get("max_path_length", n)),
    )
    band = params.get("path_count_range")
    if band is not None:
        lo, hi = int(band[0]), int(band[1])
        try:
            count = len(enumerate_attacker_actions(graph, cap=hi))
        except EnumerationOverflowError:
            raise InstanceError(f"instance has more than {hi} attacker paths") from None
        if count < lo:
            raise InstanceError(f"instance has only {count} attacker paths (< {lo})")
    return graph


def _generate_random(params: dict, rng: np.random.Generator) -> GameGraph:
    """Connected near-regular random graph with exact node/edge counts.

    A random spanning tree guarantees connectivity; the remaining edges
    always join two vertices of currently minimal degree, which keeps the
    degree distribution tight (road networks have no hubs).
    """
    n = int(params["nodes"])
    m = int(params["edges"])
    if m < n - 1:
        raise GenerationError(f"{m} edges cannot connect {n} nodes")
    if m > n * (n - 1) // 2:
        raise GenerationError(f"{m} edges exceed the simple-graph maximum for {n} nodes")
    order = rng.permutation(n)
    edge_set: set[Edge] = set()
    degree = [0] * n
    for i in range(1, n):
        j = int(rng.integers(0, i))
        e = normalize_edge(int(order[i]), int(order[j]))
        edge_set.add(e)
        degree[e[0]] += 1
        degree[e[1]] += 1
    stall = 0
    while len(edge_set) < m:
        lowest = min(degree)
        pool = [v for v in range(n) if degree[v] <= lowest + 1]
        if len(pool) < 2 or stall > 50:
            pool = list(range(n))
        u, v = (int(x) for x in rng.choice(pool, size=2, replace=False))
        e = normalize_edge(u, v) if u != v else None
        if e is None or e in edge_set:
            stall += 1
            continue
        stall = 0
        edge_set.add(e)
        degree[u] += 1
        degree[v] += 1
    return _place_and_build(n, sorted(edge_set), params, rng)


def _generate_grid(params: dict, rng: np.random.Generator) -> GameGraph:
    rows = int(params["rows"])
    cols = int(params["cols"])
    n = rows * cols
    edges: list[Edge] = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append(normalize_edge(v, v + 1))
            if r + 1 < rows:
                edges.append(normalize_edge(v, v + cols))
    return _place_and_build(n, edges, params, rng)
