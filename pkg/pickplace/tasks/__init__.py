# pickplace/tasks/__init__.py
from .episode import EpisodeTrace, Policy, run_episode
from .evaluate import evaluate_success, target_bag, update_stage
from .metrics import convex_hull_area, fabric_coverage, zone_bead_fraction, zone_of
from .registry import (
    BAG_TASKS,
    COVERAGE_THRESHOLD,
    RING_AREA_THRESHOLD,
    TASK_IDS,
    TASKS,
    GoalSpec,
    TaskSpec,
    get_task,
)
from .reset import reset_task

__all__ = [
    "BAG_TASKS", "COVERAGE_THRESHOLD", "EpisodeTrace", "GoalSpec", "Policy", "RING_AREA_THRESHOLD",
    "TASKS", "TASK_IDS", "TaskSpec", "convex_hull_area", "evaluate_success", "fabric_coverage",
    "get_task", "reset_task", "run_episode", "target_bag", "update_stage", "zone_bead_fraction",
    "zone_of",
]
