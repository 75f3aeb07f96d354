from .config import PlannerConfig, PlannerError
from .global_planner import (
    GlobalGraph,
    HomingDecision,
    Reposition,
    check_homing,
    home_path,
    plan_global_reposition,
    refresh_frontiers,
    update_global_graph,
)
from .graph import (
    ExplorationGraph,
    GraphVertex,
    ShortestPathTree,
    dijkstra,
    path_length,
    shortest_paths,
)
from .local import (
    Box,
    ClusterResult,
    LocalPlan,
    build_local_graph,
    cluster_and_evaluate,
    compute_local_box,
    exploration_gain,
    improve_path_safety,
    path_clearance,
    plan_local,
    volumetric_gain,
)

__all__ = [
    "Box",
    "ClusterResult",
    "ExplorationGraph",
    "GlobalGraph",
    "GraphVertex",
    "HomingDecision",
    "LocalPlan",
    "PlannerConfig",
    "PlannerError",
    "Reposition",
    "ShortestPathTree",
    "build_local_graph",
    "check_homing",
    "cluster_and_evaluate",
    "compute_local_box",
    "dijkstra",
    "exploration_gain",
    "home_path",
    "improve_path_safety",
    "path_clearance",
    "path_length",
    "plan_global_reposition",
    "plan_local",
    "refresh_frontiers",
    "shortest_paths",
    "update_global_graph",
    "volumetric_gain",
]
