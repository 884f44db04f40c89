# pickplace/config.py
from __future__ import annotations

import os
from typing import TYPE_CHECKING

from pydantic_settings import BaseSettings

if TYPE_CHECKING:
    from .sim.motion import MotionParams
    from .spatial import WorkspaceCalib


class Settings(BaseSettings):
    # App
    APP_NAME: str = "pickplace-lab"
    APP_VERSION: str = "0.3.0"
    LOG_LEVEL: str = "INFO"
    ENV: str = "dev"

    # Paths
    DATA_DIR: str = "./data"
    RUNS_DIR: str = "./data/runs"
    JOBS_DIR: str = "./data/jobs"

    # Redis / RQ
    REDIS_URL: str = "redis://localhost:6379/0"
    RQ_QUEUE: str = "jobs"
    RQ_JOB_TIMEOUT: int = 4 * 3600

    # Workspace / rendering
    IMG_H: int = 80
    IMG_W: int = 160
    WORKSPACE_HEIGHT_M: float = 0.5
    WORKSPACE_WIDTH_M: float = 1.0

    # Simulation
    GRASP_RADIUS_M: float = 0.03
    SUBSTEPS: int = 20
    RELAX_ITERATIONS: int = 30
    PERTURB_MAGNITUDE: float = 0.5
    BAG_ALONE_OPEN_MAX_STEPS: int = 8

    # Learning
    CROP_SIZE: int = 32
    FEATURE_DIM: int = 3
    DEBUG_FINITE_CHECKS: bool = False

    class Config:
        env_file = ".env"
        extra = "ignore"

    def ensure_dirs(self) -> None:
        for p in (self.DATA_DIR, self.RUNS_DIR, self.JOBS_DIR):
            os.makedirs(p, exist_ok=True)

    def calib(self) -> "WorkspaceCalib":
        from .spatial import WorkspaceCalib

        return WorkspaceCalib(
            width_m=self.WORKSPACE_WIDTH_M,
            height_m=self.WORKSPACE_HEIGHT_M,
            img_h=self.IMG_H,
            img_w=self.IMG_W,
        )

    def motion_params(self) -> "MotionParams":
        from .sim.motion import MotionParams

        return MotionParams(
            grasp_radius_m=self.GRASP_RADIUS_M,
            substeps=self.SUBSTEPS,
            relax_iterations=self.RELAX_ITERATIONS,
        )


def parse_kv_text(text: str) -> dict[str, str]:
    """Parse flat ``key=value`` lines; ``#`` starts a comment, blank lines are skipped."""
    from .errors import ConfigError

    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value.strip()
    return out


def format_kv_text(values: dict[str, object]) -> str:
    return "".join(f"{k}={v}\n" for k, v in values.items())
