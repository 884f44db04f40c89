# server/config.py
from __future__ import annotations

from pickplace.config import Settings as CoreSettings


class Settings(CoreSettings):
    # CORS
    CORS_ALLOW_ORIGINS: str = "http://localhost:5173"
    CORS_ALLOW_METHODS: str = "GET,POST,OPTIONS"
    CORS_ALLOW_HEADERS: str = "Content-Type,X-API-Key"

    # Auth; hard-default a dev key so local runs work without a .env
    API_KEYS: str | None = "dev-key-123"

    # Limits / observability
    RATE_LIMIT: str = "120/minute"
    ENABLE_PROMETHEUS: bool = True

    class Config:
        env_file = ".env"
        extra = "ignore"

    def api_keys(self) -> list[str]:
        return [k.strip() for k in (self.API_KEYS or "").split(",") if k.strip()]

    @staticmethod
    def split(value: str) -> list[str]:
        return [v.strip() for v in value.split(",") if v.strip()]
