# pickplace/tasks/episode.py
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

import numpy as np
import structlog

from ..models import EvalResult
from ..render import render_observation
from ..sim.motion import MotionEvent, MotionParams, PickPlaceAction, execute_pick_place
from ..sim.scene import Scene
from ..spatial import WorkspaceCalib
from .evaluate import evaluate_success, update_stage
from .registry import GoalSpec, TaskSpec
from .reset import reset_task

log = structlog.get_logger(__name__)

StateFn = Callable[[TaskSpec, Scene, GoalSpec], np.ndarray]


class Policy(Protocol):
    """Anything that maps the current episode state to an action, or ``None`` when done."""

    def act(
        self,
        spec: TaskSpec,
        scene: Scene,
        goal: GoalSpec,
        obs: np.ndarray,
        rng: np.random.Generator,
    ) -> Optional[PickPlaceAction]: ...


@dataclass
class EpisodeTrace:
    task: str
    seed: int
    initial: Scene
    final: Scene
    goal: GoalSpec
    result: EvalResult
    observations: list[np.ndarray] = field(default_factory=list)
    actions: list[PickPlaceAction] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)
    events: list[MotionEvent] = field(default_factory=list)

    @property
    def length(self) -> int:
        return len(self.actions)


def run_episode(
    spec: TaskSpec,
    policy: Policy,
    seed: int,
    calib: WorkspaceCalib | None = None,
    params: MotionParams | None = None,
    magnitude: float = 0.5,
    record: bool = True,
    state_fn: StateFn | None = None,
) -> EpisodeTrace:
    """Reset ``spec`` from ``seed`` and roll ``policy`` until done, success or ``max_steps``.

    One generator seeded with ``seed`` drives the reset and then the policy.
    Recorded observations hold ``T + 1`` frames for ``T`` actions.
    """
    rng = np.random.default_rng(seed)
    params = params or MotionParams()
    scene, goal = reset_task(spec, rng, calib, magnitude, params)
    initial = scene.copy()
    obs = render_observation(scene)
    trace = EpisodeTrace(spec.id, seed, initial, scene, goal, EvalResult(success=False, metric=0.0))
    steps = 0
    for _ in range(spec.max_steps):
        action = policy.act(spec, scene, goal, obs, rng)
        if action is None:
            break
        if record:
            trace.observations.append(obs)
            if state_fn is not None:
                trace.states.append(state_fn(spec, scene, goal))
        trace.actions.append(action)
        scene, event = execute_pick_place(scene, action, params)
        scene.stage = update_stage(spec, scene, goal)
        trace.events.append(event)
        steps += 1
        obs = render_observation(scene)
        if evaluate_success(spec, scene, goal).success:
            break
    if record:
        trace.observations.append(obs)
    trace.final = scene
    trace.result = evaluate_success(spec, scene, goal, steps)
    log.debug("task.episode", task=spec.id, seed=seed, steps=steps, success=trace.result.success)
    return trace
