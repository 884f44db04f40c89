# pickplace/models.py
from __future__ import annotations

from typing import List, Literal, Optional

from pydantic import BaseModel, Field

ModelKind = Literal[
    "transporter",
    "transporter-goal-stack",
    "transporter-goal-split",
    "gt-mlp",
    "gt-mlp-2step",
    "demonstrator",
]


class EvalResult(BaseModel):
    """Outcome of one episode.

    ``metric`` depends on the task: hull area in m^2 for ring and bag-opening tasks,
    bead fraction for cable tasks, zone coverage for fabric-flat, hidden fraction of
    the cube for fabric-cover, fraction of items in place for the other bag tasks,
    and position error in metres for block-notarget.
    """

    success: bool
    metric: float
    steps_used: int = 0


class EpisodeSummary(BaseModel):
    seed: int
    success: bool
    metric: float
    steps: int


class EvalSummary(BaseModel):
    task: str
    model: str
    episodes: int
    success_rate: float
    mean_metric: float
    mean_steps: float
    seeds: List[int] = Field(default_factory=list)
    results: List[EpisodeSummary] = Field(default_factory=list)


class ManifestEntry(BaseModel):
    path: str
    task: str
    seed: int
    length: int
    success: bool


class DatasetManifest(BaseModel):
    version: int = 1
    attempts: int = 0
    root: str = "."
    entries: List[ManifestEntry] = Field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.entries)


class DatasetStats(BaseModel):
    task: str
    episodes: int
    attempts: int
    success_rate: float
    mean_length: float
    std_length: float
    median_length: float


class SnapshotRecord(BaseModel):
    iteration: int
    path: str
    success_rate: Optional[float] = None
    mean_metric: Optional[float] = None


class TrainReport(BaseModel):
    task: str
    model: ModelKind
    out_dir: str
    snapshots: List[SnapshotRecord] = Field(default_factory=list)
    loss_log: str
    eval_log: str
    best_iteration: int = 0
    best_success: float = 0.0


class CheckResult(BaseModel):
    name: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0
