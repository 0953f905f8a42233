"""Obstacle-aware goal-space graphs and hindsight goal curricula."""

__version__ = "0.1.0"

from .distances import DistanceTable, compute_apsp, graph_distance, nearest_vertex
from .env import Action, EnvConfig, EnvState, PointMassEnv, TaskPair, abstraction_m
from .geometry import AccessibleSpace, Bounds3, Cuboid, contains, segment_intersects_cuboid
from .goalgen import (GoalSelection, HggHyperParams, select_trajectories,
                      stop_condition, trajectory_cost)
from .goalgraph import GoalGraph, LatticeSpec, build_graph, check_density
from .learner import DiscretizedQ, GoalConditionedLearner
from .replay import ReplayBuffer, Trajectory, Transition, her_relabel
from .trainer import IterationMetrics, TrainConfig, Trainer, evaluate

__all__ = [
    "AccessibleSpace", "Action", "Bounds3", "Cuboid", "DiscretizedQ",
    "DistanceTable", "EnvConfig", "EnvState", "GoalConditionedLearner",
    "GoalGraph", "GoalSelection", "HggHyperParams", "IterationMetrics",
    "LatticeSpec", "PointMassEnv", "ReplayBuffer", "TaskPair", "TrainConfig",
    "Trainer", "Trajectory", "Transition", "abstraction_m", "build_graph",
    "check_density", "compute_apsp", "contains", "evaluate", "graph_distance",
    "her_relabel", "nearest_vertex", "segment_intersects_cuboid",
    "select_trajectories", "stop_condition", "trajectory_cost",
]
