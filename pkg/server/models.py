# server/models.py
from __future__ import annotations

from typing import Any, Dict, Optional

from pydantic import BaseModel, Field

from pickplace.models import ModelKind


class TaskInfo(BaseModel):
    id: str
    family: str
    max_steps: int
    goal_conditioned: bool
    metric: str
    threshold: Optional[float] = None
    n_rots: int = 1


class GenerateJobRequest(BaseModel):
    task: str
    count: int = Field(10, ge=1, le=10_000)
    seed: int = 0
    max_steps: Optional[int] = Field(None, ge=1)


class TrainJobRequest(BaseModel):
    """Run-config fields as in a ``key=value`` file; ``dataset_job`` points at a finished generate job."""

    config: Dict[str, Any]
    dataset_job: Optional[str] = None


class EvalJobRequest(BaseModel):
    task: str
    model: Optional[ModelKind] = None
    checkpoint_job: Optional[str] = None
    checkpoint: Optional[str] = None
    episodes: int = Field(20, ge=1, le=1000)
    seed0: int = 100_000


class CancelRequest(BaseModel):
    job_id: str


class StartJobResponse(BaseModel):
    ok: bool = True
    job_id: str
    stream: str
