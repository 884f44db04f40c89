# pickplace/sim/snapshot.py
"""Versioned scene snapshots: a ``key=value`` text header, then little-endian f32 arrays."""
from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from ..errors import ArgumentError
from ..spatial import Pose2, WorkspaceCalib
from .scene import Bag, Cable, Fabric, RigidItem, Scene, Stage, Zone

MAGIC = "pickplace-scene"
VERSION = 1
F32 = np.dtype("<f4")


def _fmt(vals) -> str:
    return ",".join(repr(float(v)) for v in vals)


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t]


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.split(",") if t)


def dump_scene(scene: Scene) -> bytes:
    c = scene.calib
    lines = [
        f"{MAGIC} {VERSION}",
        f"calib origin={_fmt(c.origin)} width={c.width_m!r} height={c.height_m!r} img_h={c.img_h} img_w={c.img_w}",
        f"stage={scene.stage.name}",
        f"next_id={scene.next_id}",
        f"counts cables={len(scene.cables)} fabrics={len(scene.fabrics)} items={len(scene.items)} "
        f"zones={len(scene.zones)} bags={len(scene.bags)}",
    ]
    arrays: list[np.ndarray] = []
    for cab in scene.cables:
        lines.append(
            f"cable id={cab.id} n={cab.n} closed={int(cab.closed)} radius={cab.radius!r} "
            f"rest={cab.rest!r} color={_fmt(cab.color)}"
        )
        arrays.append(cab.pos)
    for fab in scene.fabrics:
        lines.append(f"fabric id={fab.id} n={fab.n} spacing={fab.spacing!r} color={_fmt(fab.color)}")
        arrays += [fab.pos, fab.layer]
    for it in scene.items:
        sizes = ",".join(str(len(p)) for p in it.parts)
        lines.append(
            f"item id={it.id} sizes={sizes} height={it.height!r} color={_fmt(it.color)} layer={it.layer}"
        )
        arrays += [np.array([it.x, it.y, it.theta])] + list(it.parts)
    for z in scene.zones:
        lines.append(f"zone kind={z.kind} n={len(z.points)} visible={int(z.visible)} width={z.width!r}")
        arrays += [np.array([z.pose.x, z.pose.y, z.pose.theta]), z.points]
    for b in scene.bags:
        lines.append(f"bag ring={b.ring_id} color={_fmt(b.color)} items={','.join(map(str, sorted(b.items)))}")
        arrays.append(b.origin)
    lines.append("end")
    head = ("\n".join(lines) + "\n").encode("ascii")
    body = b"".join(np.ascontiguousarray(a, dtype=F32).tobytes() for a in arrays)
    return head + body


def _kv(tokens: list[str]) -> dict[str, str]:
    return dict(t.split("=", 1) for t in tokens)


def load_scene_bytes(data: bytes) -> Scene:
    stream = io.BytesIO(data)
    first = stream.readline().decode("ascii").split()
    if len(first) != 2 or first[0] != MAGIC:
        raise ArgumentError("not a scene snapshot")
    if int(first[1]) != VERSION:
        raise ArgumentError(f"unsupported snapshot version {first[1]}")
    records: list[tuple[str, dict[str, str]]] = []
    while True:
        line = stream.readline().decode("ascii").strip()
        if not line:
            raise ArgumentError("truncated snapshot header")
        if line == "end":
            break
        head, *rest = line.split()
        records.append((head, _kv(rest) if "=" not in head else _kv([head] + rest)))
    flat = np.frombuffer(stream.read(), dtype=F32).astype(np.float64)
    cursor = 0

    def take(count: int) -> np.ndarray:
        nonlocal cursor
        if cursor + count > flat.size:
            raise ArgumentError("truncated snapshot payload")
        out = flat[cursor : cursor + count]
        cursor += count
        return out.copy()

    calib = None
    scene: Scene | None = None
    for head, kv in records:
        if head == "calib":
            calib = WorkspaceCalib(
                origin=_floats(kv["origin"]),
                width_m=float(kv["width"]),
                height_m=float(kv["height"]),
                img_h=int(kv["img_h"]),
                img_w=int(kv["img_w"]),
            )
            scene = Scene(calib)
        elif scene is None:
            continue
        elif "stage" in kv and head.startswith("stage"):
            scene.stage = Stage[kv["stage"]]
        elif "next_id" in kv and head.startswith("next_id"):
            scene.next_id = int(kv["next_id"])
        elif head == "cable":
            n = int(kv["n"])
            scene.cables.append(
                Cable(int(kv["id"]), take(2 * n).reshape(n, 2), bool(int(kv["closed"])),
                      float(kv["radius"]), float(kv["rest"]), _floats(kv["color"]))  # type: ignore[arg-type]
            )
        elif head == "fabric":
            n = int(kv["n"])
            pos = take(2 * n * n).reshape(n * n, 2)
            layer = take(n * n).astype(np.int64)
            scene.fabrics.append(Fabric(int(kv["id"]), pos, n, float(kv["spacing"]), layer, _floats(kv["color"])))  # type: ignore[arg-type]
        elif head == "item":
            x, y, th = take(3)
            parts = [take(2 * k).reshape(k, 2) for k in _ints(kv["sizes"])]
            scene.items.append(
                RigidItem(int(kv["id"]), float(x), float(y), float(th), parts, float(kv["height"]),
                          _floats(kv["color"]), int(kv["layer"]))  # type: ignore[arg-type]
            )
        elif head == "zone":
            x, y, th = take(3)
            n = int(kv["n"])
            scene.zones.append(
                Zone(kv["kind"], take(2 * n).reshape(n, 2), Pose2(float(x), float(y), float(th)),  # type: ignore[arg-type]
                     bool(int(kv["visible"])), float(kv["width"]))
            )
        elif head == "bag":
            scene.bags.append(Bag(int(kv["ring"]), set(_ints(kv.get("items", ""))), _floats(kv["color"]), take(2)))  # type: ignore[arg-type]
    if scene is None:
        raise ArgumentError("snapshot has no calibration record")
    if cursor != flat.size:
        raise ArgumentError("snapshot payload has trailing data")
    return scene


def save_scene(path: str | Path, scene: Scene) -> None:
    Path(path).write_bytes(dump_scene(scene))


def load_scene(path: str | Path) -> Scene:
    return load_scene_bytes(Path(path).read_bytes())
