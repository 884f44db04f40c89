# pickplace/harness/evaluation.py
"""Roll policies on held-out seeds and summarize the outcomes."""
from __future__ import annotations

from pathlib import Path
from typing import Iterable, Optional

import numpy as np
import structlog

from ..baselines import MlpModel, MlpPolicy
from ..errors import ConfigError
from ..events import Emitter
from ..models import EpisodeSummary, EvalSummary
from ..nn.checkpoint import load_checkpoint
from ..oracle import DemonstratorPolicy
from ..sim.motion import MotionParams
from ..spatial import WorkspaceCalib
from ..tasks.episode import Policy, run_episode
from ..tasks.registry import TaskSpec
from ..transporter import TransporterPolicy, TransportModel
from .config import GOAL_MODES

log = structlog.get_logger(__name__)


def summarize(task: str, model: str, rows: list[EpisodeSummary]) -> EvalSummary:
    n = len(rows)
    return EvalSummary(
        task=task,
        model=model,
        episodes=n,
        success_rate=float(np.mean([r.success for r in rows])) if n else 0.0,
        mean_metric=float(np.mean([r.metric for r in rows])) if n else 0.0,
        mean_steps=float(np.mean([r.steps for r in rows])) if n else 0.0,
        seeds=[r.seed for r in rows],
        results=rows,
    )


def evaluate_policy(
    spec: TaskSpec,
    policy: Policy,
    seeds: Iterable[int],
    calib: WorkspaceCalib | None = None,
    params: MotionParams | None = None,
    magnitude: float = 0.5,
    model_name: str = "",
    emitter: Emitter | None = None,
) -> EvalSummary:
    rows: list[EpisodeSummary] = []
    seeds = list(seeds)
    for i, seed in enumerate(seeds):
        if emitter is not None and emitter.cancelled():
            log.warning("eval.cancelled", task=spec.id, done=len(rows))
            break
        trace = run_episode(spec, policy, seed, calib, params, magnitude, record=False)
        rows.append(EpisodeSummary(seed=seed, success=trace.result.success, metric=trace.result.metric, steps=trace.length))
        if emitter is not None:
            emitter.progress(int(100 * (i + 1) / len(seeds)), f"episode {i + 1}/{len(seeds)}")
    summary = summarize(spec.id, model_name or getattr(policy, "name", "policy"), rows)
    log.info("eval.summary", task=spec.id, model=summary.model, episodes=summary.episodes,
             success_rate=summary.success_rate, mean_metric=summary.mean_metric)
    return summary


def load_policy(checkpoint: Optional[str | Path], spec: TaskSpec, calib: WorkspaceCalib, kind: str | None = None) -> Policy:
    """Policy for a checkpoint file, or the scripted expert for ``kind="demonstrator"``."""
    if kind == "demonstrator" or (checkpoint is None and kind is None):
        return DemonstratorPolicy()
    if checkpoint is None:
        raise ConfigError(f"model kind {kind!r} needs a checkpoint")
    stored, _, _ = load_checkpoint(checkpoint)
    if stored.get("task") != spec.id:
        raise ConfigError(f"checkpoint was trained on {stored.get('task')!r}, not {spec.id!r}")
    if stored.get("kind") == "transporter":
        model, _ = TransportModel.load(checkpoint, stored)
        actual = {v: k for k, v in GOAL_MODES.items()}[model.goal_mode]
        if kind is not None and kind != actual:
            raise ConfigError(f"checkpoint holds a {actual} model, not {kind}")
        if spec.goal_conditioned and not model.needs_goal:
            log.warning("eval.goal_ignored", task=spec.id, model=actual)
        policy = TransporterPolicy(model, calib)
        policy.name = actual
        return policy
    mlp, _ = MlpModel.load(checkpoint, stored)
    if kind is not None and kind != mlp.kind:
        raise ConfigError(f"checkpoint holds a {mlp.kind} model, not {kind}")
    return MlpPolicy(mlp, calib)


def evaluate_snapshot(
    checkpoint: Optional[str | Path],
    spec: TaskSpec,
    n_episodes: int,
    seed0: int,
    calib: WorkspaceCalib | None = None,
    params: MotionParams | None = None,
    kind: str | None = None,
    magnitude: float = 0.5,
    emitter: Emitter | None = None,
) -> EvalSummary:
    calib = calib or WorkspaceCalib()
    policy = load_policy(checkpoint, spec, calib, kind)
    return evaluate_policy(
        spec, policy, range(seed0, seed0 + n_episodes), calib, params, magnitude,
        getattr(policy, "name", kind or ""), emitter,
    )
