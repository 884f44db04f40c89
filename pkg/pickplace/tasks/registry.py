# pickplace/tasks/registry.py
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from ..errors import ArgumentError
from ..geometry import regular_polygon_area
from ..sim.scene import LINK_LENGTH, RING_BEADS, Scene

MetricKind = Literal["area", "fraction", "coverage", "covered", "inside", "position"]
Family = Literal["ring", "cable", "fabric-cover", "fabric-flat", "bag", "bag-color", "block"]

RING_AREA_THRESHOLD = 0.75 * regular_polygon_area(RING_BEADS, LINK_LENGTH)
COVERAGE_THRESHOLD = 0.85


class TaskSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    family: Family
    max_steps: int
    goal_conditioned: bool
    metric: MetricKind
    threshold: Optional[float] = None
    n_rots: int = 1


@dataclass
class GoalSpec:
    """Visible-zone tasks carry neither field; goal-conditioned tasks carry both."""

    image: Optional[np.ndarray] = None
    scene: Optional[Scene] = None


_TABLE: list[TaskSpec] = [
    TaskSpec(id="cable-ring", family="ring", max_steps=20, goal_conditioned=False, metric="area", threshold=RING_AREA_THRESHOLD),
    TaskSpec(id="cable-ring-notarget", family="ring", max_steps=20, goal_conditioned=False, metric="area", threshold=RING_AREA_THRESHOLD),
    TaskSpec(id="cable-shape", family="cable", max_steps=20, goal_conditioned=False, metric="fraction", threshold=1.0),
    TaskSpec(id="cable-shape-notarget", family="cable", max_steps=20, goal_conditioned=True, metric="fraction", threshold=1.0),
    TaskSpec(id="cable-line-notarget", family="cable", max_steps=20, goal_conditioned=True, metric="fraction", threshold=1.0),
    TaskSpec(id="fabric-cover", family="fabric-cover", max_steps=2, goal_conditioned=False, metric="covered", threshold=1.0),
    TaskSpec(id="fabric-flat", family="fabric-flat", max_steps=10, goal_conditioned=False, metric="coverage", threshold=COVERAGE_THRESHOLD),
    TaskSpec(id="fabric-flat-notarget", family="fabric-flat", max_steps=10, goal_conditioned=True, metric="coverage", threshold=COVERAGE_THRESHOLD),
    TaskSpec(id="bag-alone-open", family="bag", max_steps=8, goal_conditioned=False, metric="area", threshold=RING_AREA_THRESHOLD),
    TaskSpec(id="bag-items-1", family="bag", max_steps=8, goal_conditioned=False, metric="inside", threshold=1.0),
    TaskSpec(id="bag-items-2", family="bag", max_steps=9, goal_conditioned=False, metric="inside", threshold=1.0),
    TaskSpec(id="bag-color-goal", family="bag-color", max_steps=8, goal_conditioned=True, metric="inside", threshold=1.0),
    TaskSpec(id="block-notarget", family="block", max_steps=2, goal_conditioned=True, metric="position", n_rots=24),
]

TASKS: dict[str, TaskSpec] = {t.id: t for t in _TABLE}
TASK_IDS: tuple[str, ...] = tuple(TASKS)
BAG_TASKS = frozenset({"bag-alone-open", "bag-items-1", "bag-items-2", "bag-color-goal"})


def get_task(task_id: str, max_steps: int | None = None) -> TaskSpec:
    try:
        spec = TASKS[task_id]
    except KeyError:
        raise ArgumentError(f"unknown task {task_id!r}; expected one of {', '.join(TASK_IDS)}") from None
    if max_steps is not None:
        if max_steps < 1:
            raise ArgumentError("max_steps must be >= 1")
        spec = spec.model_copy(update={"max_steps": max_steps})
    return spec
