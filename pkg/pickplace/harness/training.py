# pickplace/harness/training.py
"""Behaviour-cloning runs: sample, step, snapshot, evaluate, log."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Union

import numpy as np
import structlog

from ..baselines import STATE_DIMS, MlpModel, MlpPolicy, mlp_train_step, normalize_action
from ..dataset import EpisodeStore, augment_consistent, read_manifest, sample_goal_conditioned
from ..errors import ConfigError, LogicError
from ..events import Emitter
from ..models import EvalSummary, SnapshotRecord, TrainReport
from ..nn.optim import AdamState
from ..spatial import WorkspaceCalib
from ..tasks.registry import TaskSpec, get_task
from ..transporter import TransporterOptimizer, TransporterPolicy, TransportModel, behavior_clone_step
from .config import GOAL_MODES, MLP_KINDS, RunConfig
from .evaluation import evaluate_policy, summarize

log = structlog.get_logger(__name__)

LOG_EVERY = 50
LOSS_HEADER = ("iteration", "attention_loss", "transport_loss")
EVAL_HEADER = ("snapshot", "success_rate", "mean_metric")

Model = Union[TransportModel, MlpModel]
StepFn = Callable[[int], tuple[float, float]]


def _fmt(x: float) -> str:
    return f"{x:.8g}"


def build_model(cfg: RunConfig, spec: TaskSpec, seed: int) -> Model:
    if cfg.model in GOAL_MODES:
        return TransportModel(
            GOAL_MODES[cfg.model],  # type: ignore[arg-type]
            cfg.crop_size, cfg.n_rots or spec.n_rots, cfg.feature_dim, cfg.width, seed, task=spec.id,
        )
    if cfg.model in MLP_KINDS:
        return MlpModel(spec.id, STATE_DIMS[spec.id], cfg.model == "gt-mlp-2step", cfg.mdn_components, seed=seed)
    raise ConfigError(f"model kind {cfg.model!r} is not trainable")


def _transport_stepper(cfg: RunConfig, model: TransportModel, store: EpisodeStore, calib: WorkspaceCalib,
                       rng: np.random.Generator) -> StepFn:
    opt = TransporterOptimizer.with_lr(cfg.lr)

    def step(_: int) -> tuple[float, float]:
        sample = sample_goal_conditioned(store, rng, calib, model.n_rots)
        if cfg.augment:
            sample = augment_consistent(sample, rng, model.crop_size, cfg.augment_rotations)
        return behavior_clone_step(model, sample, opt)

    return step


def _mlp_stepper(cfg: RunConfig, model: MlpModel, store: EpisodeStore, calib: WorkspaceCalib,
                 rng: np.random.Generator) -> StepFn:
    states, actions = [], []
    for i in range(len(store)):
        ep = store.episode(i)
        if len(ep.states) < ep.length:
            raise ConfigError(f"episode seed {ep.seed} carries no ground-truth states")
        for k in range(ep.length):
            states.append(ep.states[k])
            actions.append(normalize_action(ep.action(k), calib))
    s_all = np.asarray(states, dtype=np.float64)
    a_all = np.asarray(actions, dtype=np.float64)
    opt = AdamState(lr=cfg.mlp_lr)

    def step(_: int) -> tuple[float, float]:
        idx = rng.integers(len(s_all), size=cfg.batch_size_mlp)
        return mlp_train_step(model, s_all[idx], a_all[idx], opt)

    return step


def _policy(model: Model, calib: WorkspaceCalib, kind: str):
    if isinstance(model, TransportModel):
        p = TransporterPolicy(model, calib)
        p.name = kind
        return p
    return MlpPolicy(model, calib)


@dataclass
class _SeedRun:
    seed_index: int
    loss_path: Path
    snapshots: list[SnapshotRecord] = field(default_factory=list)
    evals: dict[int, EvalSummary] = field(default_factory=dict)


def _open_store(cfg: RunConfig, calib: WorkspaceCalib) -> EpisodeStore:
    if not cfg.dataset:
        raise ConfigError("run config names no dataset")
    manifest = read_manifest(cfg.dataset)
    if cfg.demos > manifest.n:
        raise ConfigError(f"demos={cfg.demos} but the dataset holds {manifest.n} episodes")
    if manifest.entries[0].task != cfg.task:
        raise ConfigError(f"dataset is for {manifest.entries[0].task!r}, run is for {cfg.task!r}")
    store = EpisodeStore(manifest, cfg.demos)
    shape = store.episode(0).observations[0].shape[:2]
    if shape != calib.shape:
        raise ConfigError(f"dataset images are {shape[0]}x{shape[1]}, run expects {calib.img_h}x{calib.img_w}")
    return store


def train_run(cfg: RunConfig, emitter: Emitter | None = None) -> TrainReport:
    """Train ``cfg.train_seeds`` models and pick the snapshot with the best mean success.

    Writes ``loss_log.csv`` (one file per model seed when there are several),
    ``eval_log.csv`` averaged over seeds, and checkpoints under ``snapshots/``.
    """
    spec = get_task(cfg.task, cfg.max_steps)
    if cfg.model not in GOAL_MODES and cfg.model not in MLP_KINDS:
        raise ConfigError(f"model kind {cfg.model!r} is not trainable")
    calib = cfg.calib()
    store = _open_store(cfg, calib)
    eval_seeds = cfg.eval_seeds()
    overlap = store.seeds & set(eval_seeds)
    if overlap:
        raise LogicError(f"evaluation seeds overlap training seeds: {sorted(overlap)[:5]}")

    out = Path(cfg.out_dir)
    (out / "snapshots").mkdir(parents=True, exist_ok=True)
    (out / "run.cfg").write_text(cfg.to_text(), encoding="utf-8")
    marks = [0] + list(range(cfg.snapshot_interval, cfg.iterations + 1, cfg.snapshot_interval))
    total = cfg.train_seeds * max(1, cfg.iterations)
    runs: list[_SeedRun] = []
    cancelled = False

    for s in range(cfg.train_seeds):
        name = "loss_log.csv" if cfg.train_seeds == 1 else f"loss_log_seed{s}.csv"
        run = _SeedRun(s, out / name)
        runs.append(run)
        model = build_model(cfg, spec, cfg.seed + s)
        rng = np.random.default_rng([cfg.seed, s])
        if isinstance(model, TransportModel):
            step = _transport_stepper(cfg, model, store, calib, rng)
        else:
            step = _mlp_stepper(cfg, model, store, calib, rng)
        policy = _policy(model, calib, cfg.model)

        def snapshot(it: int) -> None:
            path = model.save(out / "snapshots" / f"seed{s}_iter{it:06d}.ckpt", it)
            summary = evaluate_policy(spec, policy, eval_seeds, calib, None, cfg.magnitude, cfg.model)
            run.evals[it] = summary
            run.snapshots.append(SnapshotRecord(iteration=it, path=str(path), success_rate=summary.success_rate,
                                                mean_metric=summary.mean_metric))
            if emitter is not None:
                emitter.artifact({"kind": "checkpoint", "path": str(path), "iteration": it,
                                  "success_rate": summary.success_rate})

        log.info("train.start", task=spec.id, model=cfg.model, seed=cfg.seed + s, demos=len(store),
                 iterations=cfg.iterations)
        with run.loss_path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(LOSS_HEADER)
            snapshot(0)
            for it in range(1, cfg.iterations + 1):
                if emitter is not None and emitter.cancelled():
                    log.warning("train.cancelled", iteration=it, seed=s)
                    cancelled = True
                    break
                la, lt = step(it)
                writer.writerow((it, _fmt(la), _fmt(lt)))
                if it % LOG_EVERY == 0:
                    log.info("train.progress", iteration=it, attention_loss=la, transport_loss=lt, seed=s)
                if emitter is not None:
                    done = s * max(1, cfg.iterations) + it
                    emitter.progress(int(100 * done / total), f"seed {s} iteration {it}")
                if it in marks:
                    snapshot(it)
        if cancelled:
            break

    eval_path = out / "eval_log.csv"
    records: list[SnapshotRecord] = []
    with eval_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(EVAL_HEADER)
        for it in marks:
            per_seed = [r.evals[it] for r in runs if it in r.evals]
            if not per_seed:
                continue
            merged = summarize(spec.id, cfg.model, [row for e in per_seed for row in e.results])
            writer.writerow((it, _fmt(merged.success_rate), _fmt(merged.mean_metric)))
            records.append(SnapshotRecord(iteration=it, path=runs[0].snapshots[marks.index(it)].path,
                                          success_rate=merged.success_rate, mean_metric=merged.mean_metric))

    best = max(records, key=lambda r: (r.success_rate or 0.0, -r.iteration))
    report = TrainReport(
        task=spec.id,
        model=cfg.model,
        out_dir=str(out),
        snapshots=[rec for r in runs for rec in r.snapshots],
        loss_log=str(runs[0].loss_path),
        eval_log=str(eval_path),
        best_iteration=best.iteration,
        best_success=best.success_rate or 0.0,
    )
    (out / "report.json").write_text(report.model_dump_json(indent=2), encoding="utf-8")
    log.info("train.done", task=spec.id, model=cfg.model, best_iteration=best.iteration,
             best_success=report.best_success)
    if emitter is not None:
        emitter.artifact({"kind": "eval_log", "path": str(eval_path)})
        emitter.done(best_iteration=best.iteration, best_success=report.best_success)
    return report
