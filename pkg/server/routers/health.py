# server/routers/health.py
from __future__ import annotations

from fastapi import APIRouter

from pickplace import __version__

from ..config import Settings
from ..deps import get_redis

router = APIRouter(prefix="/api", tags=["health"])


@router.get("/healthz")
def healthz():
    return {"ok": True, "service": "pickplace-api", "version": __version__}


@router.get("/readyz")
def readyz():
    try:
        redis_ok = bool(get_redis(Settings()).ping())
    except Exception:  # noqa: BLE001
        redis_ok = False
    return {"ok": redis_ok, "redis": redis_ok}
