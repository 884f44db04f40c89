# pickplace/baselines.py
"""Ground-truth-state MLP baselines with mixture-density heads.

State vectors put every position in workspace-relative ``[-1, 1]`` coordinates.
Beads and fabric vertices carry a third value (0 for beads, normalized height for
fabric) so every entity is a 3-vector; rigid poses use ``theta / pi - 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal, Optional

import numpy as np
import structlog

from .errors import ArgumentError, ConfigError
from .geometry import points_along
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.layers import dense_backward, dense_forward, relu_backward, relu_forward
from .nn.losses import logsumexp, sigmoid, softmax, softplus
from .nn.optim import AdamState, adam_update
from .nn.tensor import ParamSet, Tensor
from .sim.motion import PickPlaceAction
from .sim.scene import CABLE_BEADS, FABRIC_THICKNESS, LINK_LENGTH, Bag, Cable, Fabric, RigidItem, Scene, Zone
from .spatial import Pose2, WorkspaceCalib, wrap_angle
from .tasks.registry import GoalSpec, TaskSpec

log = structlog.get_logger(__name__)

HEIGHT_SCALE = 0.05
VARIANCE_FLOOR = 1e-6
ACTION_DIM = 6
PICK_DIM = 3

STATE_DIMS: dict[str, int] = {
    "cable-ring": 192,
    "cable-ring-notarget": 96,
    "cable-shape": 147,
    "cable-shape-notarget": 144,
    "cable-line-notarget": 144,
    "fabric-cover": 303,
    "fabric-flat": 303,
    "fabric-flat-notarget": 600,
    "bag-alone-open": 99,
    "bag-items-1": 105,
    "bag-items-2": 108,
    "bag-color-goal": 414,
    "block-notarget": 6,
}


# -- normalization -------------------------------------------------------------------------


def normalize_xy(xy: np.ndarray, c: WorkspaceCalib) -> np.ndarray:
    lo, hi = c.lower(), c.upper()
    return 2.0 * (np.asarray(xy, dtype=np.float64) - lo) / (hi - lo) - 1.0


def denormalize_xy(v: np.ndarray, c: WorkspaceCalib) -> np.ndarray:
    lo, hi = c.lower(), c.upper()
    return lo + (np.asarray(v, dtype=np.float64) + 1.0) * (hi - lo) / 2.0


def normalize_theta(theta: float) -> float:
    return wrap_angle(theta) / math.pi - 1.0


def denormalize_theta(v: float) -> float:
    return wrap_angle((float(v) + 1.0) * math.pi)


def normalize_action(a: PickPlaceAction, c: WorkspaceCalib) -> np.ndarray:
    p0 = normalize_xy(a.pick.xy, c)
    p1 = normalize_xy(a.place.xy, c)
    return np.array([p0[0], p0[1], normalize_theta(a.pick.theta), p1[0], p1[1], normalize_theta(a.place.theta)])


def denormalize_action(v: np.ndarray, c: WorkspaceCalib) -> PickPlaceAction:
    if np.shape(v) != (ACTION_DIM,):
        raise ArgumentError(f"action vector must have {ACTION_DIM} values, got {np.shape(v)}")
    p0 = c.clamp(denormalize_xy(v[0:2], c))
    p1 = c.clamp(denormalize_xy(v[3:5], c))
    return PickPlaceAction(
        Pose2(float(p0[0]), float(p0[1]), denormalize_theta(v[2])),
        Pose2(float(p1[0]), float(p1[1]), denormalize_theta(v[5])),
    )


# -- ground-truth state --------------------------------------------------------------------


def _beads(pos: np.ndarray, c: WorkspaceCalib) -> np.ndarray:
    xy = normalize_xy(pos, c)
    return np.concatenate([xy, np.zeros((len(xy), 1))], axis=1).ravel()


def _pose(x: float, y: float, theta: float, c: WorkspaceCalib) -> np.ndarray:
    xy = normalize_xy(np.array([x, y]), c)
    return np.array([xy[0], xy[1], normalize_theta(theta)])


def _item(it: RigidItem, c: WorkspaceCalib) -> np.ndarray:
    return _pose(it.x, it.y, it.theta, c)


def _zone(z: Zone, c: WorkspaceCalib) -> np.ndarray:
    return _pose(z.pose.x, z.pose.y, z.pose.theta, c)


def _fabric(fab: Fabric, c: WorkspaceCalib) -> np.ndarray:
    xy = normalize_xy(fab.pos, c)
    z = FABRIC_THICKNESS * (np.asarray(fab.layer, dtype=np.float64) + 1.0) / HEIGHT_SCALE
    return np.concatenate([xy, z[:, None]], axis=1).ravel()


def _bag(scene: Scene, bag: Bag) -> np.ndarray:
    c = scene.calib
    ring = scene.cable(bag.ring_id)
    shift = (ring.pos.mean(axis=0) - bag.origin) * 2.0 / (c.upper() - c.lower())
    return np.concatenate([_beads(ring.pos, c), shift, [0.0]])


def _single(cables: list[Cable], closed: bool, task_id: str) -> Cable:
    found = [cb for cb in cables if cb.closed == closed]
    if len(found) != 1:
        raise ArgumentError(f"{task_id} expects one {'closed' if closed else 'open'} cable, found {len(found)}")
    return found[0]


def _goal_scene(goal: Optional[GoalSpec], task_id: str) -> Scene:
    if goal is None or goal.scene is None:
        raise ArgumentError(f"{task_id} state needs the goal scene")
    return goal.scene


def _bag_color_block(scene: Scene) -> np.ndarray:
    if len(scene.bags) != 2 or len(scene.items) != 1:
        raise ArgumentError("bag-color-goal expects two bags and one item")
    parts = [_bag(scene, b) for b in scene.bags]
    parts.append(_item(scene.items[0], scene.calib))
    parts.append(np.array([v for b in scene.bags for v in b.color], dtype=np.float64))
    return np.concatenate(parts)


def ground_truth_state(spec: TaskSpec, scene: Scene, goal: Optional[GoalSpec] = None) -> np.ndarray:
    """Flat per-task state vector; the length always equals ``STATE_DIMS[spec.id]``."""
    c = scene.calib
    fam = spec.family
    parts: list[np.ndarray] = []
    if fam == "ring":
        parts.append(_beads(_single(scene.cables, True, spec.id).pos, c))
        for z in scene.zones:
            if z.kind == "points":
                parts.append(_beads(z.points, c))
    elif fam == "cable":
        parts.append(_beads(_single(scene.cables, False, spec.id).pos, c))
        if scene.zones:
            z = scene.zones[0]
            parts.append(_beads(points_along(z.points, LINK_LENGTH, CABLE_BEADS), c))
            parts.append(_zone(z, c))
        else:
            parts.append(_beads(_single(_goal_scene(goal, spec.id).cables, False, spec.id).pos, c))
    elif fam in ("fabric-cover", "fabric-flat"):
        if len(scene.fabrics) != 1:
            raise ArgumentError(f"{spec.id} expects one fabric, found {len(scene.fabrics)}")
        parts.append(_fabric(scene.fabrics[0], c))
        if fam == "fabric-cover":
            if len(scene.items) != 1:
                raise ArgumentError("fabric-cover expects one item")
            parts.append(_item(scene.items[0], c))
        elif scene.zones:
            parts.append(_zone(scene.zones[0], c))
        else:
            parts.append(_fabric(_goal_scene(goal, spec.id).fabrics[0], c))
    elif fam == "bag":
        if len(scene.bags) != 1:
            raise ArgumentError(f"{spec.id} expects one bag, found {len(scene.bags)}")
        parts.append(_bag(scene, scene.bags[0]))
        parts.extend(_item(it, c) for it in scene.items)
        if scene.zones:
            parts.append(_zone(scene.zones[0], c))
    elif fam == "bag-color":
        parts.append(_bag_color_block(scene))
        parts.append(_bag_color_block(_goal_scene(goal, spec.id)))
    elif fam == "block":
        gs = _goal_scene(goal, spec.id)
        if len(scene.items) != 1 or len(gs.items) != 1:
            raise ArgumentError("block-notarget expects one block in scene and goal")
        parts.append(_item(scene.items[0], c))
        parts.append(_item(gs.items[0], c))
    s = np.concatenate(parts) if parts else np.zeros(0)
    want = STATE_DIMS.get(spec.id)
    if want is None or s.size != want:
        raise ArgumentError(f"{spec.id}: state has {s.size} values, expected {want}")
    return s


# -- mixture density -----------------------------------------------------------------------


@dataclass
class MdnParams:
    """``weights`` is ``B x k``; ``means`` and ``variances`` are ``B x k x D``."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self) -> None:
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=np.float64))
        self.means = np.asarray(self.means, dtype=np.float64)
        self.variances = np.asarray(self.variances, dtype=np.float64)
        if self.means.ndim == 2:
            self.means = self.means[None]
        if self.variances.ndim == 2:
            self.variances = self.variances[None]
        b, k = self.weights.shape
        if self.means.shape[:2] != (b, k) or self.variances.shape != self.means.shape:
            raise ArgumentError(
                f"mixture shapes disagree: weights {self.weights.shape}, means {self.means.shape}, "
                f"variances {self.variances.shape}"
            )
        if np.any(self.variances <= 0.0):
            raise ArgumentError("mixture variances must be positive")

    @property
    def k(self) -> int:
        return self.weights.shape[1]

    @property
    def dim(self) -> int:
        return self.means.shape[2]

    def top_means(self) -> np.ndarray:
        """Mean of the highest-weight component for each batch row."""
        j = np.argmax(self.weights, axis=1)
        return self.means[np.arange(len(j)), j]


@dataclass
class MdnGrads:
    logits: np.ndarray
    means: np.ndarray
    variances: np.ndarray


def mdn_nll(params: MdnParams, target: np.ndarray) -> tuple[float, MdnGrads]:
    """Mean negative log-likelihood over the batch and its closed-form gradients.

    Gradients are taken with respect to the mixture logits (``weights = softmax(logits)``),
    the means and the variances.
    """
    t = np.asarray(target, dtype=np.float64)
    if t.ndim == 1:
        t = t[None]
    if t.shape != (params.weights.shape[0], params.dim):
        raise ArgumentError(f"target shape {t.shape} does not match mixture over {params.dim} dims")
    b = t.shape[0]
    diff = t[:, None, :] - params.means
    var = params.variances
    log_n = -0.5 * np.sum(np.log(2.0 * math.pi * var) + diff * diff / var, axis=2)
    log_w = np.log(np.clip(params.weights, 1e-300, None))
    joint = log_w + log_n
    lse = logsumexp(joint, axis=1)
    nll = float(-lse.mean())
    gamma = np.exp(joint - lse[:, None])
    g_logits = (params.weights - gamma) / b
    g_means = -gamma[:, :, None] * diff / var / b
    g_var = gamma[:, :, None] * 0.5 * (1.0 / var - diff * diff / (var * var)) / b
    return nll, MdnGrads(g_logits, g_means, g_var)


def mdn_output_size(k: int, dim: int) -> int:
    return k * (1 + 2 * dim)


def mdn_split(raw: np.ndarray, k: int, dim: int) -> tuple[MdnParams, np.ndarray]:
    """Map raw head outputs to mixture parameters; also returns the pre-softplus values."""
    r = np.atleast_2d(np.asarray(raw, dtype=np.float64))
    if r.shape[1] != mdn_output_size(k, dim):
        raise ArgumentError(f"head width {r.shape[1]} != {mdn_output_size(k, dim)} for k={k}, D={dim}")
    b = r.shape[0]
    logits = r[:, :k]
    means = r[:, k : k + k * dim].reshape(b, k, dim)
    pre = r[:, k + k * dim :].reshape(b, k, dim)
    return MdnParams(softmax(logits, axis=1), means, softplus(pre) + VARIANCE_FLOOR), pre


def mdn_head_loss(raw: np.ndarray, target: np.ndarray, k: int) -> tuple[float, np.ndarray]:
    t = np.atleast_2d(target)
    params, pre = mdn_split(raw, k, t.shape[1])
    loss, g = mdn_nll(params, t)
    b = params.weights.shape[0]
    g_pre = g.variances * sigmoid(pre)
    graw = np.concatenate([g.logits, g.means.reshape(b, -1), g_pre.reshape(b, -1)], axis=1)
    return loss, graw.astype(np.asarray(raw).dtype)


# -- MLP -----------------------------------------------------------------------------------


def mlp_init(in_dim: int, out_dim: int, hidden: int, depth: int, rng: np.random.Generator, prefix: str) -> ParamSet:
    params = ParamSet()
    dims = [in_dim] + [hidden] * depth + [out_dim]
    for i in range(len(dims) - 1):
        std = math.sqrt(2.0 / dims[i]) if i < len(dims) - 2 else 1e-2
        params.add(Tensor(rng.normal(0.0, std, size=(dims[i], dims[i + 1])).astype(np.float32), f"{prefix}d{i}.w"))
        params.add(Tensor(np.zeros(dims[i + 1], dtype=np.float32), f"{prefix}d{i}.b"))
    return params


def mlp_forward(params: ParamSet, x: np.ndarray, prefix: str) -> tuple[np.ndarray, list[tuple[np.ndarray, np.ndarray]]]:
    n = len(params) // 2
    cache = []
    a = np.atleast_2d(np.asarray(x, dtype=np.float32))
    for i in range(n):
        z = dense_forward(a, params[f"{prefix}d{i}.w"].data, params[f"{prefix}d{i}.b"].data)
        cache.append((a, z))
        a = relu_forward(z) if i < n - 1 else z
    return a, cache


def mlp_backward(params: ParamSet, cache: list[tuple[np.ndarray, np.ndarray]], output_grad: np.ndarray, prefix: str) -> np.ndarray:
    n = len(cache)
    g = output_grad
    for i in range(n - 1, -1, -1):
        a, z = cache[i]
        if i < n - 1:
            g = relu_backward(g, z)
        w = params[f"{prefix}d{i}.w"]
        gx, dw, db = dense_backward(g, a, w.data)
        w.accumulate(dw.astype(w.data.dtype))
        bt = params[f"{prefix}d{i}.b"]
        bt.accumulate(db.astype(bt.data.dtype))
        g = gx
    return g


MlpKind = Literal["gt-mlp", "gt-mlp-2step"]


class MlpModel:
    """One-step regresses the 6-D action; two-step regresses the pick, then the place from ``[s, pick]``."""

    def __init__(
        self,
        task: str,
        state_dim: int,
        two_step: bool = False,
        components: int = 26,
        hidden: int = 128,
        depth: int = 3,
        seed: int = 0,
    ):
        if state_dim < 1 or components < 1 or hidden < 1 or depth < 1:
            raise ArgumentError("state_dim, components, hidden and depth must be >= 1")
        self.task = task
        self.state_dim = state_dim
        self.two_step = two_step
        self.components = components
        self.hidden = hidden
        self.depth = depth
        rng = np.random.default_rng(seed)
        if two_step:
            self.nets = [
                mlp_init(state_dim, mdn_output_size(components, PICK_DIM), hidden, depth, rng, "pick."),
                mlp_init(state_dim + PICK_DIM, mdn_output_size(components, ACTION_DIM - PICK_DIM), hidden, depth, rng, "place."),
            ]
            self.prefixes = ["pick.", "place."]
        else:
            self.nets = [mlp_init(state_dim, mdn_output_size(components, ACTION_DIM), hidden, depth, rng, "act.")]
            self.prefixes = ["act."]

    @property
    def kind(self) -> MlpKind:
        return "gt-mlp-2step" if self.two_step else "gt-mlp"

    @property
    def params(self) -> ParamSet:
        return ParamSet([t for net in self.nets for t in net])

    def place_input_dim(self) -> int:
        return self.state_dim + PICK_DIM if self.two_step else self.state_dim

    def spec_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "task": self.task,
            "state_dim": self.state_dim,
            "components": self.components,
            "hidden": self.hidden,
            "depth": self.depth,
        }

    def save(self, path: str | Path, step: int) -> Path:
        return save_checkpoint(path, self.spec_dict(), self.params.arrays(), step)

    @classmethod
    def load(cls, path: str | Path, expect: dict[str, Any] | None = None) -> tuple["MlpModel", int]:
        spec, tensors, step = load_checkpoint(path, expect)
        if spec.get("kind") not in ("gt-mlp", "gt-mlp-2step"):
            raise ConfigError(f"checkpoint holds a {spec.get('kind')!r} model, not an MLP")
        model = cls(spec["task"], spec["state_dim"], spec["kind"] == "gt-mlp-2step", spec["components"], spec["hidden"], spec["depth"])
        try:
            model.params.load_arrays(tensors)
        except ArgumentError as exc:
            raise ConfigError(str(exc)) from exc
        return model, step

    def _check(self, s: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(s, dtype=np.float64))
        if x.shape[1] != self.state_dim:
            raise ArgumentError(f"state has {x.shape[1]} values, model for {self.task!r} expects {self.state_dim}")
        return x

    def heads(self, s: np.ndarray) -> list[MdnParams]:
        x = self._check(s)
        if not self.two_step:
            raw, _ = mlp_forward(self.nets[0], x, "act.")
            return [mdn_split(raw, self.components, ACTION_DIM)[0]]
        raw, _ = mlp_forward(self.nets[0], x, "pick.")
        pick = mdn_split(raw, self.components, PICK_DIM)[0]
        raw2, _ = mlp_forward(self.nets[1], np.concatenate([x, pick.top_means()], axis=1), "place.")
        return [pick, mdn_split(raw2, self.components, ACTION_DIM - PICK_DIM)[0]]


def mlp_predict(model: MlpModel, s: np.ndarray) -> np.ndarray:
    """Normalized 6-D action: the mean of the highest-weight component of each head."""
    return np.concatenate([h.top_means() for h in model.heads(s)], axis=1)[0]


def mlp_act(model: MlpModel, s: np.ndarray, calib: WorkspaceCalib) -> PickPlaceAction:
    return denormalize_action(mlp_predict(model, s), calib)


def mlp_train_step(model: MlpModel, states: np.ndarray, actions: np.ndarray, opt: AdamState) -> tuple[float, float]:
    """One Adam step of mixture NLL on a batch; returns (first head, second head) losses.

    The one-step model has a single head, so its second loss is 0.
    """
    x = model._check(states)
    y = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    if y.shape != (x.shape[0], ACTION_DIM):
        raise ArgumentError(f"actions must be {x.shape[0]}x{ACTION_DIM}, got {y.shape}")
    loss2 = 0.0
    if not model.two_step:
        raw, cache = mlp_forward(model.nets[0], x, "act.")
        loss, g = mdn_head_loss(raw, y, model.components)
        mlp_backward(model.nets[0], cache, g, "act.")
    else:
        raw, cache = mlp_forward(model.nets[0], x, "pick.")
        loss, g = mdn_head_loss(raw, y[:, :PICK_DIM], model.components)
        mlp_backward(model.nets[0], cache, g, "pick.")
        raw2, cache2 = mlp_forward(model.nets[1], np.concatenate([x, y[:, :PICK_DIM]], axis=1), "place.")
        loss2, g2 = mdn_head_loss(raw2, y[:, PICK_DIM:], model.components)
        mlp_backward(model.nets[1], cache2, g2, "place.")
    adam_update(opt, model.params)
    return loss, loss2


class MlpPolicy:
    def __init__(self, model: MlpModel, calib: WorkspaceCalib):
        self.model = model
        self.calib = calib
        self.name = model.kind

    def act(self, spec: TaskSpec, scene: Scene, goal: GoalSpec, obs: np.ndarray, rng: np.random.Generator) -> PickPlaceAction:
        return mlp_act(self.model, ground_truth_state(spec, scene, goal), self.calib)
