"""Directional navigation policies, crowd simulation, SDI scoring and GA-SA policy search."""

from .errors import (
    EmptyGraph,
    EmptySeries,
    ExhaustedAttempts,
    NavPolicyError,
    ScenarioInvalid,
    SkeletonMismatch,
    Unreachable,
    UnreachableItem,
    UnknownNode,
)
from .navgraph import NavGraph, Path, plan_tour, populate, shortest_path
from .optimizer import OptimizerConfig, accept_decision, converged, evaluate, optimize
from .policy import (
    EdgeState,
    Node,
    StructuralGraph,
    edge_edit_distance,
    graph_edit_distance,
    is_strongly_connected,
    produce,
    randomize_state,
    reachable_set,
)
from .scenario import Scenario, load_bundled, load_scenario
from .sdi import SdiParams, evaluate_sdi, occupancy_sweep, sdi
from .simulator import SimConfig, SimResult, run, total_travel_distance

__version__ = "0.1.0"
