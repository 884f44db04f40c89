# pickplace/dataset.py
"""Demonstration episodes on disk, hindsight sampling and consistent augmentation."""
from __future__ import annotations

import shutil
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
import structlog

from .baselines import ground_truth_state
from .config import format_kv_text, parse_kv_text
from .errors import ArgumentError, ConfigError, LogicError, SimulationError
from .events import Emitter
from .models import DatasetManifest, DatasetStats, ManifestEntry
from .oracle import DemonstratorPolicy
from .render import OBSERVATION_FILL
from .sim.motion import MotionParams, PickPlaceAction
from .sim.snapshot import save_scene
from .spatial import TWO_PI, ImageSE2, WorkspaceCalib, rotation_bin, transform_image_se2, world_to_pixel
from .tasks.episode import run_episode
from .tasks.registry import BAG_TASKS, TaskSpec

log = structlog.get_logger(__name__)

TENSOR_MAGIC = b"PKPL"
TENSOR_VERSION = 1
_HEADER = struct.Struct("<4sHHII")
_F32 = np.dtype("<f4")
_F64 = np.dtype("<f8")
# header dtype codes
_DTYPES = {0: _F32, 1: _F64}

MANIFEST_NAME = "manifest.csv"
MANIFEST_VERSION = 1
AUGMENT_TRIES = 100
BAG_ATTEMPT_FACTOR = 50


# -- tensor files --------------------------------------------------------------------------


def encode_tensor(arr: np.ndarray) -> bytes:
    """Float64 arrays are stored as float64; everything else as float32."""
    code = 1 if np.asarray(arr).dtype == np.float64 else 0
    a = np.ascontiguousarray(arr, dtype=_DTYPES[code])
    head = _HEADER.pack(TENSOR_MAGIC, TENSOR_VERSION, a.ndim, code, 0)
    dims = struct.pack(f"<{a.ndim}I", *a.shape)
    return head + dims + a.tobytes()


def decode_tensor(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise ArgumentError("tensor file shorter than its header")
    magic, version, ndim, dtype, _ = _HEADER.unpack_from(data)
    if magic != TENSOR_MAGIC:
        raise ArgumentError(f"bad tensor magic {magic!r}")
    if version != TENSOR_VERSION or dtype not in _DTYPES:
        raise ArgumentError(f"unsupported tensor version {version} / dtype {dtype}")
    off = _HEADER.size
    shape = struct.unpack_from(f"<{ndim}I", data, off)
    off += 4 * ndim
    count = int(np.prod(shape)) if ndim else 1
    dt = _DTYPES[dtype]
    if len(data) - off != dt.itemsize * count:
        raise ArgumentError(f"tensor payload is {len(data) - off} bytes, expected {dt.itemsize * count}")
    return np.frombuffer(data, dtype=dt, count=count, offset=off).reshape(shape).astype(dt.type)


def write_tensor(path: str | Path, arr: np.ndarray) -> None:
    Path(path).write_bytes(encode_tensor(arr))


def read_tensor(path: str | Path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())


# -- episodes ------------------------------------------------------------------------------


@dataclass
class Episode:
    task: str
    seed: int
    observations: list[np.ndarray]
    actions: np.ndarray
    states: list[np.ndarray] = field(default_factory=list)
    success: bool = False
    metric: float = 0.0

    @property
    def length(self) -> int:
        return len(self.actions)

    @property
    def goal_image(self) -> np.ndarray:
        return self.observations[-1]

    def action(self, k: int) -> PickPlaceAction:
        return PickPlaceAction.from_array(self.actions[k])


def save_episode(path: str | Path, ep: Episode, initial=None, goal_scene=None) -> None:
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    if len(ep.observations) != ep.length + 1:
        raise LogicError(f"episode has {len(ep.observations)} frames for {ep.length} actions")
    meta = {
        "version": MANIFEST_VERSION,
        "task": ep.task,
        "seed": ep.seed,
        "length": ep.length,
        "success": int(ep.success),
        "metric": repr(float(ep.metric)),
        "states": len(ep.states),
    }
    (d / "meta").write_text(format_kv_text(meta))
    for k, obs in enumerate(ep.observations):
        write_tensor(d / f"obs_{k:03d}.bin", obs)
    for k, s in enumerate(ep.states):
        write_tensor(d / f"state_{k:03d}.bin", s)
    write_tensor(d / "actions.bin", np.asarray(ep.actions, dtype=np.float64).reshape(-1, 6))
    if initial is not None:
        save_scene(d / "scene_init.snap", initial)
    if goal_scene is not None:
        save_scene(d / "goal.snap", goal_scene)


def load_episode(path: str | Path) -> Episode:
    d = Path(path)
    try:
        meta = parse_kv_text((d / "meta").read_text())
    except FileNotFoundError:
        raise ArgumentError(f"{d} is not an episode directory") from None
    length = int(meta["length"])
    obs = [read_tensor(d / f"obs_{k:03d}.bin") for k in range(length + 1)]
    states = [read_tensor(d / f"state_{k:03d}.bin") for k in range(int(meta.get("states", 0)))]
    actions = read_tensor(d / "actions.bin").reshape(length, 6)
    return Episode(meta["task"], int(meta["seed"]), obs, actions, states, meta["success"] == "1", float(meta["metric"]))


# -- manifests -----------------------------------------------------------------------------


def write_manifest(root: str | Path, manifest: DatasetManifest) -> Path:
    path = Path(root) / MANIFEST_NAME
    lines = [f"# pickplace-manifest v{manifest.version} attempts={manifest.attempts}"]
    lines += [f"{e.path},{e.task},{e.seed},{e.length},{int(e.success)}" for e in manifest.entries]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_manifest(path: str | Path) -> DatasetManifest:
    p = Path(path)
    if p.is_dir():
        p = p / MANIFEST_NAME
    if not p.exists():
        raise ConfigError(f"no dataset manifest at {p}")
    lines = [ln for ln in p.read_text().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("# pickplace-manifest v"):
        raise ConfigError(f"{p} is not a dataset manifest")
    head = lines[0].split()
    version = int(head[2][1:])
    attempts = int(head[3].split("=", 1)[1]) if len(head) > 3 else 0
    entries = []
    for ln in lines[1:]:
        path_s, task, seed, length, success = ln.split(",")
        entries.append(ManifestEntry(path=path_s, task=task, seed=int(seed), length=int(length), success=success == "1"))
    return DatasetManifest(version=version, attempts=attempts, root=str(p.parent), entries=entries)


def generate_dataset(
    spec: TaskSpec,
    count: int,
    seed0: int,
    out_dir: str | Path,
    calib: WorkspaceCalib | None = None,
    params: MotionParams | None = None,
    magnitude: float = 0.5,
    emitter: Emitter | None = None,
    max_attempts: int | None = None,
) -> DatasetManifest:
    """Roll the demonstrator with seeds ``seed0, seed0 + 1, ...`` and write episodes plus manifest.

    Bag tasks keep only successful episodes until ``count`` are collected; other
    tasks keep every completed episode. Episodes that raise ``SimulationError`` or
    take no action are skipped and logged.
    """
    if count < 1:
        raise ArgumentError("count must be >= 1")
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    for stale in root.glob("ep_*"):
        shutil.rmtree(stale)
    only_success = spec.id in BAG_TASKS
    cap = max_attempts or (BAG_ATTEMPT_FACTOR * count if only_success else 2 * count + 10)
    policy = DemonstratorPolicy()
    manifest = DatasetManifest(version=MANIFEST_VERSION, root=str(root))
    seed = seed0
    while manifest.n < count and manifest.attempts < cap:
        if emitter is not None and emitter.cancelled():
            log.warning("dataset.cancelled", task=spec.id, kept=manifest.n)
            break
        manifest.attempts += 1
        try:
            trace = run_episode(spec, policy, seed, calib, params, magnitude, record=True, state_fn=ground_truth_state)
        except SimulationError:
            log.warning("dataset.episode_skipped", task=spec.id, seed=seed, exc_info=True)
            seed += 1
            continue
        if trace.length == 0:
            log.warning("dataset.episode_empty", task=spec.id, seed=seed)
        elif only_success and not trace.result.success:
            log.debug("dataset.episode_failed", task=spec.id, seed=seed)
        else:
            name = f"ep_{seed:06d}"
            ep = Episode(
                spec.id, seed, trace.observations, np.array([a.as_array() for a in trace.actions]),
                trace.states, trace.result.success, trace.result.metric,
            )
            save_episode(root / name, ep, trace.initial, trace.goal.scene)
            manifest.entries.append(
                ManifestEntry(path=name, task=spec.id, seed=seed, length=ep.length, success=ep.success)
            )
            log.info("dataset.episode_written", task=spec.id, seed=seed, length=ep.length, success=ep.success)
            if emitter is not None:
                emitter.progress(int(100 * manifest.n / count), f"{manifest.n}/{count} episodes")
        seed += 1
    if manifest.n < count:
        log.warning("dataset.short", task=spec.id, kept=manifest.n, wanted=count, attempts=manifest.attempts)
    if manifest.n == 0:
        raise LogicError(f"no usable {spec.id} episodes in {manifest.attempts} attempts")
    write_manifest(root, manifest)
    return manifest


def dataset_stats(manifest: DatasetManifest) -> DatasetStats:
    lengths = np.array([e.length for e in manifest.entries], dtype=np.float64)
    ok = np.array([e.success for e in manifest.entries], dtype=bool)
    task = manifest.entries[0].task if manifest.entries else ""
    return DatasetStats(
        task=task,
        episodes=manifest.n,
        attempts=manifest.attempts,
        success_rate=float(ok.sum()) / max(1, manifest.attempts),
        mean_length=float(lengths.mean()) if lengths.size else 0.0,
        std_length=float(lengths.std()) if lengths.size else 0.0,
        median_length=float(np.median(lengths)) if lengths.size else 0.0,
    )


class EpisodeStore:
    """Read-only view of a manifest with an in-memory episode cache."""

    def __init__(self, manifest: DatasetManifest, limit: int | None = None):
        if manifest.n == 0:
            raise ArgumentError("empty dataset manifest")
        self.manifest = manifest
        self.entries = manifest.entries[: limit or manifest.n]
        self._cache: dict[int, Episode] = {}

    @classmethod
    def open(cls, path: str | Path, limit: int | None = None) -> "EpisodeStore":
        return cls(read_manifest(path), limit)

    def __len__(self) -> int:
        return len(self.entries)

    def episode(self, i: int) -> Episode:
        ep = self._cache.get(i)
        if ep is None:
            ep = load_episode(Path(self.manifest.root) / self.entries[i].path)
            self._cache[i] = ep
        return ep

    @property
    def seeds(self) -> set[int]:
        return {e.seed for e in self.entries}


# -- training samples ----------------------------------------------------------------------


@dataclass(frozen=True)
class TrainingSample:
    obs: np.ndarray
    pick: tuple[int, int]
    place: tuple[int, int]
    rot_bin: int
    n_rots: int
    goal: Optional[np.ndarray] = None
    state: Optional[np.ndarray] = None
    action: Optional[np.ndarray] = None
    transform: Optional[ImageSE2] = None


def action_labels(a: PickPlaceAction, c: WorkspaceCalib, n_rots: int) -> tuple[tuple[int, int], tuple[int, int], int]:
    pick = world_to_pixel(a.pick.xy, c, clip=True)
    place = world_to_pixel(a.place.xy, c, clip=True)
    return pick, place, rotation_bin(a.place.theta - a.pick.theta, n_rots)


def sample_goal_conditioned(
    store: EpisodeStore, rng: np.random.Generator, calib: WorkspaceCalib, n_rots: int = 1
) -> TrainingSample:
    """One uniformly drawn step with the episode's final frame as its goal."""
    i = int(rng.integers(len(store)))
    ep = store.episode(i)
    k = int(rng.integers(ep.length))
    a = ep.action(k)
    pick, place, rot = action_labels(a, calib, n_rots)
    state = ep.states[k] if k < len(ep.states) else None
    return TrainingSample(ep.observations[k], pick, place, rot, n_rots, ep.goal_image, state, ep.actions[k])


def _interior(p: tuple[int, int], h: int, w: int, half: int) -> bool:
    return half <= p[0] < h - half and half <= p[1] < w - half


def augment_consistent(
    sample: TrainingSample,
    rng: np.random.Generator,
    crop_size: int,
    augment_rotations: bool = True,
) -> TrainingSample:
    """Apply one random SE(2) image transform to the observation, the goal and the labels.

    The rotation is a whole number of bins about the pick pixel; the translation
    keeps both labels at least ``crop_size / 2`` pixels from every border.
    """
    h, w = sample.obs.shape[:2]
    half = crop_size // 2
    pivot = (float(sample.pick[0]), float(sample.pick[1]))
    for _ in range(AUGMENT_TRIES):
        j = int(rng.integers(sample.n_rots)) if augment_rotations else 0
        alpha = j * TWO_PI / sample.n_rots
        rot = ImageSE2(0.0, 0.0, alpha, pivot)
        labels = np.array([rot.apply_pixel(sample.pick), rot.apply_pixel(sample.place)])
        lo = half - labels.min(axis=0)
        hi = np.array([h, w]) - half - 1 - labels.max(axis=0)
        if np.any(lo > hi):
            continue
        du = int(rng.integers(lo[0], hi[0] + 1))
        dv = int(rng.integers(lo[1], hi[1] + 1))
        t = ImageSE2(float(du), float(dv), alpha, pivot)
        pick, place = t.apply_pixel(sample.pick), t.apply_pixel(sample.place)
        if not (_interior(pick, h, w, half) and _interior(place, h, w, half)):
            continue
        obs = transform_image_se2(sample.obs, t, "nearest", OBSERVATION_FILL)
        goal = None if sample.goal is None else transform_image_se2(sample.goal, t, "nearest", OBSERVATION_FILL)
        return replace(
            sample, obs=obs, goal=goal, pick=pick, place=place,
            rot_bin=(sample.rot_bin + j) % sample.n_rots, transform=t,
        )
    return sample


__all__ = [
    "Episode", "EpisodeStore", "TrainingSample", "action_labels", "augment_consistent", "dataset_stats",
    "decode_tensor", "encode_tensor", "generate_dataset", "load_episode", "read_manifest", "read_tensor",
    "sample_goal_conditioned", "save_episode", "write_manifest", "write_tensor",
]
