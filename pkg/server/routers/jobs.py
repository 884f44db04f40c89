# server/routers/jobs.py
from __future__ import annotations

import asyncio
from typing import Any, AsyncIterator, Callable, Optional

import orjson
from fastapi import APIRouter, Depends, HTTPException, Request
from fastapi.responses import StreamingResponse
from rq.job import Job

from pickplace.errors import ArgumentError, ConfigError
from pickplace.harness.config import RunConfig
from pickplace.tasks.registry import get_task
from workers import run_eval_job, run_generate_job, run_train_job

from ..config import Settings
from ..deps import get_redis, get_rq_queue
from ..metrics import JOBS_CANCELLED, JOBS_ENQUEUED
from ..models import CancelRequest, EvalJobRequest, GenerateJobRequest, StartJobResponse, TrainJobRequest
from ..security import require_api_key
from ..services.jobs import job_channel, set_cancelled

router = APIRouter(prefix="/api/jobs", tags=["jobs"], dependencies=[Depends(require_api_key)])


def _enqueue(kind: str, fn: Callable[..., Any], payload: dict, cfg: Settings) -> StartJobResponse:
    q = get_rq_queue(cfg)
    job: Job = q.enqueue(
        fn,
        payload,
        cfg.model_dump(),
        job_timeout=cfg.RQ_JOB_TIMEOUT,
        failure_ttl=3600,
        result_ttl=3600,
        description=f"{kind} {payload.get('task') or payload.get('config', {}).get('task', '')}",
    )
    JOBS_ENQUEUED.labels(kind=kind).inc()
    return StartJobResponse(job_id=job.id, stream=f"/api/jobs/stream?job_id={job.id}")


@router.post("/generate", response_model=StartJobResponse)
def start_generate(body: GenerateJobRequest):
    cfg = Settings()
    cfg.ensure_dirs()
    try:
        get_task(body.task, body.max_steps)
    except ArgumentError as e:
        raise HTTPException(400, str(e))
    return _enqueue("generate", run_generate_job, body.model_dump(), cfg)


@router.post("/train", response_model=StartJobResponse)
def start_train(body: TrainJobRequest):
    cfg = Settings()
    cfg.ensure_dirs()
    raw = {k: str(v) for k, v in body.config.items()}
    if body.dataset_job is None and not raw.get("dataset"):
        raise HTTPException(400, "config.dataset or dataset_job required")
    try:
        RunConfig.model_validate({"dataset": "pending", **raw})
        get_task(raw.get("task", ""))
    except (ConfigError, ArgumentError, ValueError) as e:
        raise HTTPException(400, str(e))
    return _enqueue("train", run_train_job, {"config": raw, "dataset_job": body.dataset_job}, cfg)


@router.post("/eval", response_model=StartJobResponse)
def start_eval(body: EvalJobRequest):
    cfg = Settings()
    cfg.ensure_dirs()
    try:
        get_task(body.task)
    except ArgumentError as e:
        raise HTTPException(400, str(e))
    if body.model != "demonstrator" and not (body.checkpoint or body.checkpoint_job):
        raise HTTPException(400, "checkpoint or checkpoint_job required")
    return _enqueue("eval", run_eval_job, body.model_dump(), cfg)


async def _pubsub_sse(r, channel: str, request: Optional[Request] = None) -> AsyncIterator[str]:
    psub = r.pubsub()
    await asyncio.to_thread(psub.subscribe, channel)
    try:
        yield "event: ping\ndata: {}\n\n"
        while True:
            if request is not None:
                try:
                    if await request.is_disconnected():
                        break
                except Exception:  # noqa: BLE001
                    pass
            msg = await asyncio.to_thread(psub.get_message, timeout=1.0)
            if not msg:
                yield "event: ping\ndata: {}\n\n"
                await asyncio.sleep(0.5)
                continue
            if msg.get("type") != "message":
                continue
            payload = orjson.loads(msg["data"])
            event = payload.get("event", "log")
            yield f"event: {event}\n"
            yield f"data: {orjson.dumps(payload.get('data', {})).decode()}\n\n"
            if event in ("done", "failed"):
                break
    finally:
        try:
            await asyncio.to_thread(psub.unsubscribe, channel)
        finally:
            psub.close()


@router.get("/stream")
async def stream(job_id: str, request: Request):
    r = get_redis(Settings())
    return StreamingResponse(
        _pubsub_sse(r, job_channel(job_id), request=request),
        media_type="text/event-stream",
        headers={"Cache-Control": "no-cache", "X-Accel-Buffering": "no"},
    )


@router.post("/cancel")
def cancel(body: CancelRequest):
    set_cancelled(Settings(), body.job_id)
    JOBS_CANCELLED.inc()
    return {"ok": True, "cancelled": True}
