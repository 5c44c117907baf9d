"""Solver workbench for edge-interception security games on road
networks: tree-factored stochastic training, a flat enumerated baseline,
an exact double-oracle baseline, and exact or simulated evaluation."""

__version__ = "0.1.0"

from .double_oracle import DoubleOracleSolver, best_response, solve_restricted
from .evaluation import (
    GapEvaluator,
    WinRateMatrix,
    duality_gap,
    extract_mixed_strategy,
    win_rate_matrix,
)
from .flat_solver import FlatSolver, FlatStrategy, nal_train_flat
from .graphs import (
    AttackerAction,
    DefenderAction,
    DefenderSpec,
    GameGraph,
    GameInstance,
    MixedStrategy,
    attacker_utility,
    enumerate_attacker_actions,
    enumerate_defender_actions,
    expected_utility,
    generate_graph,
    parse_graph_file,
    payoff_matrix,
    write_graph_file,
)
from .policies import (
    TreePolicy,
    action_log_prob_grad,
    action_probability,
    apply_update,
    conditional_distribution,
    sample_action,
)
from .training import (
    Hyperparameters,
    SampleRecord,
    TrainState,
    TreeSolver,
    make_sample,
    sample_and_prune,
    train,
    train_step,
)
from .trees import (
    ActionMask,
    AttackerHistory,
    AttackerTreeView,
    DefenderHistory,
    DefenderTreeView,
    attacker_valid_actions,
    count_leaves,
    defender_valid_actions,
)

__all__ = [
    "__version__",
    "ActionMask",
    "AttackerAction",
    "AttackerHistory",
    "AttackerTreeView",
    "DefenderAction",
    "DefenderHistory",
    "DefenderSpec",
    "DefenderTreeView",
    "DoubleOracleSolver",
    "FlatSolver",
    "FlatStrategy",
    "GameGraph",
    "GameInstance",
    "GapEvaluator",
    "Hyperparameters",
    "MixedStrategy",
    "SampleRecord",
    "TrainState",
    "TreePolicy",
    "TreeSolver",
    "WinRateMatrix",
    "action_log_prob_grad",
    "action_probability",
    "apply_update",
    "attacker_utility",
    "attacker_valid_actions",
    "best_response",
    "conditional_distribution",
    "count_leaves",
    "defender_valid_actions",
    "duality_gap",
    "enumerate_attacker_actions",
    "enumerate_defender_actions",
    "expected_utility",
    "extract_mixed_strategy",
    "generate_graph",
    "make_sample",
    "nal_train_flat",
    "parse_graph_file",
    "payoff_matrix",
    "sample_action",
    "sample_and_prune",
    "solve_restricted",
    "train",
    "train_step",
    "win_rate_matrix",
    "write_graph_file",
]
