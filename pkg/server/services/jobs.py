# server/services/jobs.py
from __future__ import annotations

import os
from pathlib import Path

import orjson

from ..config import Settings
from ..deps import get_redis

CANCEL_TTL_S = 600


def job_channel(job_id: str) -> str:
    return f"job:{job_id}:events"


def job_dirs(cfg: Settings, job_id: str) -> dict[str, str]:
    root = os.path.join(cfg.JOBS_DIR, job_id)
    art = os.path.join(root, "artifacts")
    os.makedirs(art, exist_ok=True)
    return {"root": root, "artifacts": art}


def artifacts_dir(cfg: Settings, job_id: str) -> Path:
    """Artifact folder of an existing job; rejects ids that escape JOBS_DIR."""
    base = Path(cfg.JOBS_DIR).resolve()
    path = (base / job_id / "artifacts").resolve()
    if base not in path.parents:
        raise ValueError(f"bad job id {job_id!r}")
    return path


def publish_event(cfg: Settings, job_id: str, event: str, data: dict) -> None:
    r = get_redis(cfg)
    r.publish(job_channel(job_id), orjson.dumps({"event": event, "data": data}))


def set_cancelled(cfg: Settings, job_id: str) -> None:
    r = get_redis(cfg)
    r.setex(f"job:{job_id}:cancel", CANCEL_TTL_S, b"1")


def is_cancelled(cfg: Settings, job_id: str) -> bool:
    r = get_redis(cfg)
    return r.get(f"job:{job_id}:cancel") is not None
