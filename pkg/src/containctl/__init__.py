"""Optimal output containment control for heterogeneous linear multi-agent systems.

The library covers the full pipeline: communication topologies and hull
weights (`graph`), follower/leader models with regulator equations and
closed-loop verification (`dynamics`), Riccati machinery including the
discounted output-cost design (`riccati`), the distributed state and leader
observers (`observers`), the off-policy learning loop (`rl`), scenario files
(`scenario`), the simulation harness (`sim`), figure rendering (`report`),
and the command-line front end (`cli`).
"""

from __future__ import annotations

from .dynamics import (
    AssumptionReport,
    DimensionError,
    FollowerModel,
    GainSet,
    LeaderModel,
    RegulationReport,
    RegulatorError,
    RegulatorSolution,
    check_assumptions,
    closed_loop_matrices,
    feedforward_gain,
    solve_regulator,
    verify_output_regulation,
)
from .graph import (
    Graph,
    GraphError,
    LaplacianPartition,
    TopologyReport,
    build_graph,
    laplacian_partition,
    random_topology,
    relabel_topological,
    validate_topology,
)
from .observers import (
    ObserverErrorReport,
    adaptive_observer_rhs,
    observer_error_report,
    state_observer_rhs,
    static_observer_rhs,
)
from .riccati import (
    AugmentedSystem,
    CareSolution,
    DiscountedSolution,
    RiccatiError,
    augment,
    coupling_bound,
    discount_bound,
    discounted_are,
    observer_synthesis,
    solve_care,
    solve_lyapunov,
    stabilizing_gain,
)
from .rl import (
    ExcitationError,
    FollowerLearning,
    LearnerConfig,
    LearningResult,
    least_squares_update,
    model_based_iterate,
    run_off_policy,
)
from .scenario import (
    CostSettings,
    ObserverSettings,
    Scenario,
    ScenarioError,
    SimSettings,
    load_scenario,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
)
from .sim import (
    ContainmentError,
    DecayFit,
    LearningData,
    SimulationAbort,
    SimulationResult,
    StateLayout,
    Trajectory,
    collect_learning_data,
    containment_error,
    hull_distance,
    integrate,
    paper_scenario,
    run_scenario,
    synthesize_gains,
)

__version__ = "0.1.0"

__all__ = [
    "AssumptionReport",
    "AugmentedSystem",
    "CareSolution",
    "ContainmentError",
    "DecayFit",
    "CostSettings",
    "DimensionError",
    "DiscountedSolution",
    "ExcitationError",
    "FollowerLearning",
    "FollowerModel",
    "GainSet",
    "Graph",
    "GraphError",
    "LaplacianPartition",
    "LearnerConfig",
    "LearningData",
    "LearningResult",
    "LeaderModel",
    "ObserverErrorReport",
    "ObserverSettings",
    "RegulationReport",
    "RegulatorError",
    "RegulatorSolution",
    "RiccatiError",
    "Scenario",
    "ScenarioError",
    "SimSettings",
    "SimulationAbort",
    "SimulationResult",
    "StateLayout",
    "TopologyReport",
    "Trajectory",
    "adaptive_observer_rhs",
    "augment",
    "build_graph",
    "check_assumptions",
    "closed_loop_matrices",
    "collect_learning_data",
    "containment_error",
    "coupling_bound",
    "discount_bound",
    "discounted_are",
    "feedforward_gain",
    "hull_distance",
    "integrate",
    "laplacian_partition",
    "least_squares_update",
    "load_scenario",
    "model_based_iterate",
    "observer_error_report",
    "observer_synthesis",
    "paper_scenario",
    "random_topology",
    "relabel_topological",
    "run_off_policy",
    "run_scenario",
    "save_scenario",
    "scenario_from_dict",
    "scenario_to_dict",
    "solve_care",
    "solve_lyapunov",
    "solve_regulator",
    "stabilizing_gain",
    "state_observer_rhs",
    "static_observer_rhs",
    "synthesize_gains",
    "validate_topology",
    "__version__",
]
