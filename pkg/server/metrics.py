# server/metrics.py
from __future__ import annotations

from fastapi import FastAPI
from prometheus_client import Counter
from prometheus_fastapi_instrumentator import Instrumentator

JOBS_ENQUEUED = Counter("pickplace_jobs_enqueued_total", "Jobs put on the queue", ["kind"])
JOBS_CANCELLED = Counter("pickplace_jobs_cancelled_total", "Cancel requests received")


def setup_metrics(app: FastAPI, enable: bool = True) -> None:
    if not enable:
        return
    Instrumentator().instrument(app).expose(app, endpoint="/metrics", include_in_schema=False)
