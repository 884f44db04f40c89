# pickplace/events.py
from __future__ import annotations

from typing import Any, Dict, Protocol

import structlog


class Emitter(Protocol):
    """Progress sink shared by CLI runs and queued jobs."""

    def progress(self, pct: int, msg: str) -> None: ...

    def log(self, level: str, msg: str) -> None: ...

    def artifact(self, artifact: Dict[str, Any]) -> None: ...

    def done(self, **extra: Any) -> None: ...

    def cancelled(self) -> bool: ...


class LogEmitter:
    """Writes emitter events through structlog."""

    __slots__ = ("_log",)

    def __init__(self, name: str = "pickplace.run"):
        self._log = structlog.get_logger(name)

    def progress(self, pct: int, msg: str) -> None:
        self._log.info("progress", pct=int(pct), msg=msg)

    def log(self, level: str, msg: str) -> None:
        getattr(self._log, level if level in ("debug", "info", "warning", "error") else "info")(msg)

    def artifact(self, artifact: Dict[str, Any]) -> None:
        self._log.info("artifact", **artifact)

    def done(self, **extra: Any) -> None:
        self._log.info("done", ok=True, **extra)

    def cancelled(self) -> bool:
        return False
