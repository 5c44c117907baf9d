import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from edgewatch.graphs import DefenderSpec, GameGraph, GameInstance


@pytest.fixture
def diamond() -> GameInstance:
    """Four-cycle with one start and one target: the 2x2 coin-matching
    game once one defender guards the two target edges."""
    graph = GameGraph(
        vertex_count=4,
        edges=[(0, 1), (0, 2), (1, 3), (2, 3)],
        start_vertices=[0],
        target_vertices=[3],
        target_values={3: 1.0},
        max_path_length=4,
    )
    return GameInstance(graph, DefenderSpec([[(1, 3), (2, 3)]]))


@pytest.fixture
def k4() -> GameInstance:
    """Complete graph on four vertices: five attacker paths."""
    graph = GameGraph(
        vertex_count=4,
        edges=[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)],
        start_vertices=[0],
        target_vertices=[3],
        target_values={3: 1.0},
        max_path_length=4,
    )
    return GameInstance(graph, DefenderSpec([[(0, 3), (1, 3), (2, 3)]]))


@pytest.fixture
def k4_two_defenders() -> GameInstance:
    graph = GameGraph(
        vertex_count=4,
        edges=[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)],
        start_vertices=[0],
        target_vertices=[3],
        target_values={3: 1.0},
        max_path_length=4,
    )
    spec = DefenderSpec([[(0, 3), (1, 3), (2, 3)], [(0, 3), (1, 3), (2, 3)]])
    return GameInstance(graph, spec)
