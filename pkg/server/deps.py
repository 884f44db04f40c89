# server/deps.py
from __future__ import annotations

import redis
from rq import Queue

from .config import Settings


def get_redis(cfg: Settings | None = None) -> redis.Redis:
    cfg = cfg or Settings()
    return redis.Redis.from_url(cfg.REDIS_URL, decode_responses=False)


def get_rq_queue(cfg: Settings | None = None) -> Queue:
    cfg = cfg or Settings()
    return Queue(cfg.RQ_QUEUE, connection=get_redis(cfg), default_timeout=cfg.RQ_JOB_TIMEOUT)
