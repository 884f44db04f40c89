# workers/worker.py
from __future__ import annotations

from pathlib import Path
from typing import Any, Dict

import redis
import structlog
from rq import get_current_job

from server.config import Settings
from server.services.events import JobEmitter
from server.services.jobs import artifacts_dir, job_dirs, publish_event

log = structlog.get_logger(__name__)


def _current_id() -> str:
    job = get_current_job()
    return job.id if job else "local"


def _fail(cfg: Settings, job_id: str, exc: Exception) -> None:
    log.error("job.failed", job_id=job_id, error=str(exc), kind=type(exc).__name__)
    publish_event(cfg, job_id, "failed", {"ok": False, "error": str(exc), "kind": type(exc).__name__})


def run_generate_job(req: Dict[str, Any], cfg_dict: Dict[str, Any]) -> Dict[str, Any]:
    """RQ entrypoint: roll the demonstrator and write a dataset into the job's artifact folder.

    Heavy imports happen here (in the child) to keep the parent worker clean before fork.
    """
    from pickplace.dataset import MANIFEST_NAME, dataset_stats, generate_dataset
    from pickplace.tasks.registry import get_task

    cfg = Settings.model_validate(cfg_dict)
    job_id = _current_id()
    emitter = JobEmitter(cfg, job_id)
    out = Path(job_dirs(cfg, job_id)["artifacts"]) / "dataset"
    emitter.log("info", f"generating {req['count']} {req['task']} episodes")
    try:
        spec = get_task(req["task"], req.get("max_steps"))
        manifest = generate_dataset(
            spec, int(req["count"]), int(req.get("seed", 0)), out, cfg.calib(), cfg.motion_params(),
            cfg.PERTURB_MAGNITUDE, emitter,
        )
    except Exception as exc:
        _fail(cfg, job_id, exc)
        raise
    stats = dataset_stats(manifest).model_dump()
    emitter.artifact({"kind": "manifest", "path": str(out / MANIFEST_NAME)})
    emitter.done(stats=stats)
    return stats


def run_train_job(req: Dict[str, Any], cfg_dict: Dict[str, Any]) -> Dict[str, Any]:
    """RQ entrypoint: train from a run config, reading the dataset of an earlier generate job if named."""
    from pickplace.harness.config import RunConfig
    from pickplace.harness.training import train_run

    cfg = Settings.model_validate(cfg_dict)
    job_id = _current_id()
    emitter = JobEmitter(cfg, job_id)
    raw = dict(req["config"])
    if req.get("dataset_job"):
        raw["dataset"] = str(artifacts_dir(cfg, req["dataset_job"]) / "dataset")
    raw["out_dir"] = str(Path(job_dirs(cfg, job_id)["artifacts"]) / "run")
    try:
        run = RunConfig.model_validate(raw)
        report = train_run(run, emitter)
    except Exception as exc:
        _fail(cfg, job_id, exc)
        raise
    return report.model_dump()


def run_eval_job(req: Dict[str, Any], cfg_dict: Dict[str, Any]) -> Dict[str, Any]:
    """RQ entrypoint: evaluate a checkpoint (or the demonstrator) on held-out seeds."""
    from pickplace.harness.evaluation import evaluate_snapshot
    from pickplace.models import TrainReport
    from pickplace.tasks.registry import get_task

    cfg = Settings.model_validate(cfg_dict)
    job_id = _current_id()
    emitter = JobEmitter(cfg, job_id)
    checkpoint = req.get("checkpoint")
    try:
        if req.get("checkpoint_job"):
            report = artifacts_dir(cfg, req["checkpoint_job"]) / "run" / "report.json"
            if not report.exists():
                raise FileNotFoundError(f"job {req['checkpoint_job']} has no training report")
            tr = TrainReport.model_validate_json(report.read_text(encoding="utf-8"))
            checkpoint = next(s.path for s in tr.snapshots if s.iteration == tr.best_iteration)
        summary = evaluate_snapshot(
            checkpoint, get_task(req["task"]), int(req.get("episodes", 20)), int(req.get("seed0", 100_000)),
            cfg.calib(), cfg.motion_params(), req.get("model"), cfg.PERTURB_MAGNITUDE, emitter,
        )
    except Exception as exc:
        _fail(cfg, job_id, exc)
        raise
    out = Path(job_dirs(cfg, job_id)["artifacts"]) / "eval.json"
    out.write_text(summary.model_dump_json(indent=2), encoding="utf-8")
    emitter.artifact({"kind": "eval", "path": str(out)})
    result = summary.model_dump(exclude={"results"})
    emitter.done(summary=result)
    return result


if __name__ == "__main__":
    # Import worker classes only when running this module directly.
    from rq.worker import Worker

    from pickplace.logging import setup_logging

    cfg = Settings()
    setup_logging(cfg.LOG_LEVEL)
    redis_conn = redis.Redis.from_url(cfg.REDIS_URL)
    w = Worker([cfg.RQ_QUEUE], connection=redis_conn)
    w.work(with_scheduler=False)
