# pickplace/harness/config.py
from __future__ import annotations

from pathlib import Path
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..config import format_kv_text, parse_kv_text
from ..errors import ConfigError
from ..models import ModelKind
from ..spatial import WorkspaceCalib

GOAL_MODES: dict[str, str] = {
    "transporter": "none",
    "transporter-goal-stack": "stack",
    "transporter-goal-split": "split",
}
MLP_KINDS = frozenset({"gt-mlp", "gt-mlp-2step"})


class RunConfig(BaseModel):
    """One training run, read from a flat ``key=value`` file."""

    model_config = ConfigDict(extra="forbid")

    task: str
    model: ModelKind = "transporter-goal-split"
    dataset: str = ""
    demos: int = Field(10, ge=1)
    iterations: int = Field(2000, ge=0)
    snapshot_interval: int = Field(200, ge=1)
    eval_episodes: int = Field(20, ge=0)
    seed: int = 0
    train_seeds: int = Field(1, ge=1)
    eval_seed0: int = 100_000
    img_h: int = 80
    img_w: int = 160
    workspace_height_m: float = 0.5
    workspace_width_m: float = 1.0
    crop_size: int = 32
    n_rots: Optional[int] = None
    feature_dim: int = Field(3, ge=1)
    width: int = Field(16, ge=1)
    lr: float = Field(1e-4, gt=0.0)
    mlp_lr: float = Field(2e-4, gt=0.0)
    batch_size_mlp: int = Field(128, ge=1)
    mdn_components: int = Field(26, ge=1)
    augment: bool = True
    augment_rotations: bool = True
    magnitude: float = Field(0.5, ge=0.0)
    max_steps: Optional[int] = None
    out_dir: str = "./data/runs/run"

    @model_validator(mode="after")
    def _consistent(self) -> "RunConfig":
        if self.iterations > 0 and self.iterations % self.snapshot_interval:
            raise ValueError(f"snapshot_interval {self.snapshot_interval} does not divide iterations {self.iterations}")
        if self.crop_size < 2 or self.crop_size % 2:
            raise ValueError(f"crop_size must be even and >= 2, got {self.crop_size}")
        if self.n_rots is not None and self.n_rots < 1:
            raise ValueError("n_rots must be >= 1")
        if self.img_h % 2 or self.img_w % 2:
            raise ValueError(f"image {self.img_h}x{self.img_w} must have even dimensions")
        return self

    def calib(self) -> WorkspaceCalib:
        try:
            return WorkspaceCalib(
                width_m=self.workspace_width_m, height_m=self.workspace_height_m, img_h=self.img_h, img_w=self.img_w
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def eval_seeds(self) -> list[int]:
        return list(range(self.eval_seed0, self.eval_seed0 + self.eval_episodes))

    def to_text(self) -> str:
        return format_kv_text({k: v for k, v in self.model_dump().items() if v is not None})


def run_config_from_text(text: str) -> RunConfig:
    raw = parse_kv_text(text)
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"invalid run config: {exc}") from exc


def load_run_config(path: str | Path) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"no config file at {p}")
    cfg = run_config_from_text(p.read_text(encoding="utf-8"))
    if cfg.dataset and not Path(cfg.dataset).is_absolute():
        cfg = cfg.model_copy(update={"dataset": str((p.parent / cfg.dataset).resolve())})
    return cfg
