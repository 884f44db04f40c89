# pickplace/transporter.py
"""Attention and transport networks with optional goal conditioning.

Goal modes: ``none`` sees only the observation; ``stack`` concatenates observation
and goal image into a 12-channel input for every network; ``split`` adds a goal
network whose features gate the key and query features element-wise.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, Optional

import numpy as np
import structlog

from .errors import ArgumentError, BoundsError, ConfigError
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.fcn import FcnCache, FcnSpec, fcn_backward, fcn_forward, fcn_init, hourglass_spec
from .nn.losses import pixel_cross_entropy
from .nn.optim import AdamState, adam_update
from .nn.tensor import ParamSet
from .sim.motion import PickPlaceAction
from .spatial import TWO_PI, ImageSE2, Pose2, WorkspaceCalib, pixel_to_world, round_half_up

log = structlog.get_logger(__name__)

GoalMode = Literal["none", "stack", "split"]
OBS_CHANNELS = 6
COLOR_MEAN = 0.5
DEPTH_SCALE = 0.05


def preprocess(obs: np.ndarray) -> np.ndarray:
    if obs.ndim != 3 or obs.shape[2] != OBS_CHANNELS:
        raise ArgumentError(f"observation must be HxWx{OBS_CHANNELS}, got {obs.shape}")
    x = np.array(obs, dtype=np.float32)
    x[..., :3] -= COLOR_MEAN
    x[..., 3:] /= DEPTH_SCALE
    return x


def argmax_first(q: np.ndarray) -> tuple[int, ...]:
    """Index of the maximum; ties go to the lowest flat index."""
    return tuple(int(i) for i in np.unravel_index(int(np.argmax(q)), q.shape))


class TransportModel:
    def __init__(
        self,
        goal_mode: GoalMode = "none",
        crop_size: int = 32,
        n_rots: int = 1,
        feature_dim: int = 3,
        width: int = 16,
        seed: int = 0,
        task: str = "",
        dtype=np.float32,
    ):
        if goal_mode not in ("none", "stack", "split"):
            raise ArgumentError(f"unknown goal mode {goal_mode!r}")
        if crop_size < 2 or crop_size % 2:
            raise ArgumentError(f"crop_size must be even and >= 2, got {crop_size}")
        if feature_dim < 1 or n_rots < 1:
            raise ArgumentError("feature_dim and n_rots must be >= 1")
        self.goal_mode: GoalMode = goal_mode
        self.crop_size = crop_size
        self.n_rots = n_rots
        self.feature_dim = feature_dim
        self.width = width
        self.task = task
        self.in_channels = 2 * OBS_CHANNELS if goal_mode == "stack" else OBS_CHANNELS
        self.attention_spec = hourglass_spec(self.in_channels, 1, width)
        self.key_spec = hourglass_spec(self.in_channels, feature_dim, width)
        self.query_spec = hourglass_spec(self.in_channels, feature_dim, width)
        self.goal_spec: Optional[FcnSpec] = hourglass_spec(OBS_CHANNELS, feature_dim, width) if goal_mode == "split" else None
        rng = np.random.default_rng(seed)
        self.attention = fcn_init(self.attention_spec, rng, dtype, "attention.")
        self.key = fcn_init(self.key_spec, rng, dtype, "key.")
        self.query = fcn_init(self.query_spec, rng, dtype, "query.")
        self.goal = fcn_init(self.goal_spec, rng, dtype, "goal.") if self.goal_spec is not None else None

    @property
    def transport_params(self) -> ParamSet:
        tensors = list(self.key) + list(self.query) + (list(self.goal) if self.goal is not None else [])
        return ParamSet(tensors)

    @property
    def needs_goal(self) -> bool:
        return self.goal_mode != "none"

    def all_params(self) -> ParamSet:
        return ParamSet(list(self.attention) + list(self.transport_params))

    def spec_dict(self) -> dict[str, Any]:
        return {
            "kind": "transporter",
            "task": self.task,
            "goal_mode": self.goal_mode,
            "crop_size": self.crop_size,
            "n_rots": self.n_rots,
            "feature_dim": self.feature_dim,
            "width": self.width,
        }

    def save(self, path: str | Path, step: int) -> Path:
        return save_checkpoint(path, self.spec_dict(), self.all_params().arrays(), step)

    @classmethod
    def from_spec(cls, spec: dict[str, Any]) -> "TransportModel":
        if spec.get("kind") != "transporter":
            raise ConfigError(f"checkpoint holds a {spec.get('kind')!r} model, not a transporter")
        return cls(spec["goal_mode"], spec["crop_size"], spec["n_rots"], spec["feature_dim"], spec["width"], task=spec.get("task", ""))

    @classmethod
    def load(cls, path: str | Path, expect: dict[str, Any] | None = None) -> tuple["TransportModel", int]:
        spec, tensors, step = load_checkpoint(path, expect)
        model = cls.from_spec(spec)
        try:
            model.all_params().load_arrays(tensors)
        except ArgumentError as exc:
            raise ConfigError(str(exc)) from exc
        return model, step


def _model_input(model: TransportModel, obs: np.ndarray, goal: Optional[np.ndarray]) -> np.ndarray:
    x = preprocess(obs)
    if model.goal_mode == "stack":
        if goal is None:
            raise ArgumentError("goal-stack model needs a goal image")
        if goal.shape != obs.shape:
            raise ArgumentError(f"goal shape {goal.shape} differs from observation {obs.shape}")
        x = np.concatenate([x, preprocess(goal)], axis=-1)
    return x


# -- attention -----------------------------------------------------------------------------


def attention_logits(model: TransportModel, obs: np.ndarray, goal: Optional[np.ndarray] = None) -> tuple[np.ndarray, FcnCache]:
    out, cache = fcn_forward(model.attention_spec, model.attention, _model_input(model, obs, goal), prefix="attention.")
    return out[..., 0], cache


def attention_infer(model: TransportModel, obs: np.ndarray, goal: Optional[np.ndarray] = None) -> tuple[np.ndarray, tuple[int, int]]:
    q, _ = attention_logits(model, obs, goal)
    u, v = argmax_first(q)
    return q, (u, v)


# -- crop, rotate and correlate ------------------------------------------------------------


@dataclass
class CorrCache:
    shape: tuple[int, int, int]
    crop_size: int
    flat: list[np.ndarray]
    valid: list[np.ndarray]
    crop_fft: list[np.ndarray]
    key_fft: np.ndarray
    dtype: Any = np.float32


def _reflect_index(size: int, pad: int) -> np.ndarray:
    return np.pad(np.arange(size), pad, mode="reflect")


def crop_indices(pick: tuple[int, int], shape: tuple[int, int], crop_size: int, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Flat indices into the reflect-padded map for a crop rotated by ``alpha`` about ``pick``."""
    h, w = shape
    half = crop_size // 2
    hp, wp = h + crop_size, w + crop_size
    piv = (float(pick[0] + half), float(pick[1] + half))
    aa, bb = np.meshgrid(np.arange(crop_size), np.arange(crop_size), indexing="ij")
    q = np.stack([aa + pick[0], bb + pick[1]], axis=-1).astype(np.float64)
    src = round_half_up(ImageSE2(0.0, 0.0, alpha, piv).apply_inverse(q))
    valid = (src[..., 0] >= 0) & (src[..., 0] < hp) & (src[..., 1] >= 0) & (src[..., 1] < wp)
    flat = np.where(valid, src[..., 0] * wp + src[..., 1], 0)
    return flat, valid


def correlate_crop(
    query: np.ndarray, key: np.ndarray, pick: tuple[int, int], crop_size: int, n_rots: int
) -> tuple[np.ndarray, CorrCache]:
    """Score every placement: rotated query crops around ``pick`` correlated over ``key``.

    Output is ``n_rots x H x W`` scaled by ``1 / crop_size**2``; entry ``[r, u, v]``
    scores the crop centred at ``(u, v)`` after rotating it by ``r * 2 pi / n_rots``.
    """
    if query.shape != key.shape or query.ndim != 3:
        raise ArgumentError(f"query {query.shape} and key {key.shape} must be equal HxWxd maps")
    h, w, d = key.shape
    pu, pv = int(pick[0]), int(pick[1])
    if not (0 <= pu < h and 0 <= pv < w):
        raise BoundsError(f"pick {(pu, pv)} outside {h}x{w}")
    half = crop_size // 2
    if half >= min(h, w):
        raise ArgumentError(f"crop {crop_size} too large for a {h}x{w} map")
    qp = query[_reflect_index(h, half)][:, _reflect_index(w, half)].astype(np.float64).reshape(-1, d)
    kz = np.pad(key.astype(np.float64), ((half, half), (half, half), (0, 0)))
    size = (h + crop_size, w + crop_size)
    key_fft = np.fft.rfft2(kz, s=size, axes=(0, 1))
    out = np.empty((n_rots, h, w))
    flats, valids, ffts = [], [], []
    for r in range(n_rots):
        flat, valid = crop_indices((pu, pv), (h, w), crop_size, r * TWO_PI / n_rots)
        crop = np.where(valid[..., None], qp[flat], 0.0)
        cf = np.fft.rfft2(crop, s=size, axes=(0, 1))
        corr = np.fft.irfft2((np.conj(cf) * key_fft).sum(axis=-1), s=size)
        out[r] = corr[:h, :w] / (crop_size * crop_size)
        flats.append(flat)
        valids.append(valid)
        ffts.append(cf)
    return out, CorrCache((h, w, d), crop_size, flats, valids, ffts, key_fft, key.dtype)


def correlate_crop_backward(output_grad: np.ndarray, cache: CorrCache) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of ``correlate_crop`` with respect to the query and key maps."""
    h, w, d = cache.shape
    c = cache.crop_size
    half = c // 2
    size = (h + c, w + c)
    scale = 1.0 / (c * c)
    dkz = np.zeros((size[0], size[1], d))
    dqp = np.zeros((size[0] * size[1], d))
    for r in range(len(cache.flat)):
        gf = np.fft.rfft2(np.asarray(output_grad[r], dtype=np.float64) * scale, s=size)
        dkz += np.fft.irfft2(gf[..., None] * cache.crop_fft[r], s=size, axes=(0, 1))
        dcrop = np.fft.irfft2(np.conj(gf)[..., None] * cache.key_fft, s=size, axes=(0, 1))[:c, :c]
        valid = cache.valid[r]
        np.add.at(dqp, cache.flat[r][valid], dcrop[valid])
    dkey = dkz[half : half + h, half : half + w]
    dq = dqp.reshape(size[0], size[1], d)
    dq_rows = np.zeros((h, size[1], d))
    np.add.at(dq_rows, _reflect_index(h, half), dq)
    dquery = np.zeros((h, w, d))
    np.add.at(dquery, (slice(None), _reflect_index(w, half)), dq_rows)
    return dquery.astype(cache.dtype), dkey.astype(cache.dtype)


# -- transport -----------------------------------------------------------------------------


@dataclass
class TransportCache:
    key: FcnCache
    query: FcnCache
    corr: CorrCache
    key_feat: np.ndarray
    query_feat: np.ndarray
    goal: Optional[FcnCache] = None
    goal_feat: Optional[np.ndarray] = None


def transport_forward(
    model: TransportModel, obs: np.ndarray, pick: tuple[int, int], goal: Optional[np.ndarray] = None
) -> tuple[np.ndarray, TransportCache]:
    x = _model_input(model, obs, goal)
    kf, kc = fcn_forward(model.key_spec, model.key, x, prefix="key.")
    qf, qc = fcn_forward(model.query_spec, model.query, x, prefix="query.")
    gf = gc = None
    psi_k, psi_q = kf, qf
    if model.goal_mode == "split":
        if goal is None:
            raise ArgumentError("goal-split model needs a goal image")
        if goal.shape != obs.shape:
            raise ArgumentError(f"goal shape {goal.shape} differs from observation {obs.shape}")
        gf, gc = fcn_forward(model.goal_spec, model.goal, preprocess(goal), prefix="goal.")  # type: ignore[arg-type]
        psi_k, psi_q = kf * gf, qf * gf
    q, cc = correlate_crop(psi_q, psi_k, pick, model.crop_size, model.n_rots)
    return q, TransportCache(kc, qc, cc, kf, qf, gc, gf)


def transport_backward(model: TransportModel, cache: TransportCache, output_grad: np.ndarray) -> None:
    dpq, dpk = correlate_crop_backward(output_grad, cache.corr)
    if cache.goal is not None and cache.goal_feat is not None:
        gf = cache.goal_feat
        dg = dpk * cache.key_feat + dpq * cache.query_feat
        fcn_backward(model.goal_spec, model.goal, cache.goal, dg.astype(gf.dtype), prefix="goal.")  # type: ignore[arg-type]
        dpk, dpq = dpk * gf, dpq * gf
    fcn_backward(model.key_spec, model.key, cache.key, dpk, prefix="key.")
    fcn_backward(model.query_spec, model.query, cache.query, dpq, prefix="query.")


def transport_infer(
    model: TransportModel, obs: np.ndarray, pick: tuple[int, int], goal: Optional[np.ndarray] = None
) -> np.ndarray:
    return transport_forward(model, obs, pick, goal)[0]


def transport_goal_split_infer(
    model: TransportModel, obs: np.ndarray, goal: np.ndarray, pick: tuple[int, int]
) -> np.ndarray:
    if model.goal_mode != "split":
        raise ArgumentError(f"model is in {model.goal_mode!r} mode, not split")
    return transport_forward(model, obs, pick, goal)[0]


# -- training and acting -------------------------------------------------------------------


@dataclass
class TransporterOptimizer:
    attention: AdamState = field(default_factory=AdamState)
    transport: AdamState = field(default_factory=AdamState)

    @classmethod
    def with_lr(cls, lr: float) -> "TransporterOptimizer":
        return cls(AdamState(lr=lr), AdamState(lr=lr))


def behavior_clone_step(model: TransportModel, sample, opt: TransporterOptimizer) -> tuple[float, float]:
    """One Adam step on each module for a labelled sample; returns (attention, transport) losses."""
    h, w = sample.obs.shape[:2]
    for name, (u, v) in (("pick", sample.pick), ("place", sample.place)):
        if not (0 <= u < h and 0 <= v < w):
            raise BoundsError(f"{name} label {(u, v)} outside {h}x{w}")
    if not 0 <= sample.rot_bin < model.n_rots:
        raise BoundsError(f"rotation bin {sample.rot_bin} outside [0, {model.n_rots})")
    goal = sample.goal if model.needs_goal else None

    logits, cache = attention_logits(model, sample.obs, goal)
    loss_a, g = pixel_cross_entropy(logits, sample.pick[0] * w + sample.pick[1])
    fcn_backward(model.attention_spec, model.attention, cache, g[..., None], prefix="attention.")
    adam_update(opt.attention, model.attention)

    q, tcache = transport_forward(model, sample.obs, sample.pick, goal)
    label = (sample.rot_bin * h + sample.place[0]) * w + sample.place[1]
    loss_t, gq = pixel_cross_entropy(q, label)
    transport_backward(model, tcache, gq)
    adam_update(opt.transport, model.transport_params)
    return loss_a, loss_t


def policy_act(
    model: TransportModel, obs: np.ndarray, goal: Optional[np.ndarray], calib: WorkspaceCalib
) -> PickPlaceAction:
    g = goal if model.needs_goal else None
    _, pick = attention_infer(model, obs, g)
    q = transport_infer(model, obs, pick, g)
    r, u, v = argmax_first(q)
    p0 = pixel_to_world(pick, calib)
    p1 = pixel_to_world((u, v), calib)
    return PickPlaceAction(Pose2(float(p0[0]), float(p0[1]), 0.0), Pose2(float(p1[0]), float(p1[1]), r * TWO_PI / model.n_rots))


class TransporterPolicy:
    name = "transporter"

    def __init__(self, model: TransportModel, calib: WorkspaceCalib):
        self.model = model
        self.calib = calib

    def act(self, spec, scene, goal, obs, rng) -> PickPlaceAction:
        image = goal.image if (goal is not None and self.model.needs_goal) else None
        if self.model.needs_goal and image is None:
            raise ArgumentError(f"{spec.id} provides no goal image for a goal-conditioned model")
        return policy_act(self.model, obs, image, self.calib)
