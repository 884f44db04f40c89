# server/main.py
from __future__ import annotations

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import ORJSONResponse, PlainTextResponse
from slowapi import Limiter
from slowapi.errors import RateLimitExceeded
from slowapi.middleware import SlowAPIMiddleware
from slowapi.util import get_remote_address

from pickplace.logging import setup_logging
from pickplace.nn.tensor import set_finite_checks

from .config import Settings
from .metrics import setup_metrics
from .routers import exports, health, jobs, tasks


def create_app(cfg: Settings | None = None) -> FastAPI:
    cfg = cfg or Settings()
    cfg.ensure_dirs()
    logger = setup_logging(cfg.LOG_LEVEL)
    set_finite_checks(cfg.DEBUG_FINITE_CHECKS)

    app = FastAPI(title=cfg.APP_NAME, version=cfg.APP_VERSION, default_response_class=ORJSONResponse)

    app.add_middleware(
        CORSMiddleware,
        allow_origins=cfg.split(cfg.CORS_ALLOW_ORIGINS),
        allow_methods=cfg.split(cfg.CORS_ALLOW_METHODS),
        allow_headers=cfg.split(cfg.CORS_ALLOW_HEADERS),
    )

    # Rate limits (per IP)
    limiter = Limiter(key_func=get_remote_address, default_limits=[cfg.RATE_LIMIT])
    app.state.limiter = limiter
    app.add_middleware(SlowAPIMiddleware)

    @app.exception_handler(RateLimitExceeded)
    def _ratelimit_handler(request, exc):
        return PlainTextResponse("Too Many Requests", status_code=429)

    app.include_router(health.router)
    app.include_router(tasks.router)
    app.include_router(jobs.router)
    app.include_router(exports.router)

    setup_metrics(app, enable=cfg.ENABLE_PROMETHEUS)
    logger.info("api.ready", app=cfg.APP_NAME, version=cfg.APP_VERSION, env=cfg.ENV)
    return app


app = create_app()
