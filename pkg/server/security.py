# server/security.py
from __future__ import annotations

from fastapi import Depends, HTTPException, Request
from starlette.status import HTTP_401_UNAUTHORIZED

from .config import Settings


def get_settings() -> Settings:
    return Settings()


def require_api_key(req: Request, cfg: Settings = Depends(get_settings)) -> bool:
    keys = cfg.api_keys()
    if keys and (req.headers.get("X-API-Key") or "").strip() in keys:
        return True
    raise HTTPException(HTTP_401_UNAUTHORIZED, "Unauthorized")
