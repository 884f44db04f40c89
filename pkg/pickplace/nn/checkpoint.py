# pickplace/nn/checkpoint.py
"""Binary checkpoints: header, spec hash, spec JSON, then named little-endian f32 tensors."""
from __future__ import annotations

import hashlib
import struct
from pathlib import Path
from typing import Any

import numpy as np
import orjson

from ..errors import ConfigError

MAGIC = b"PKCK"
VERSION = 1
_HEAD = struct.Struct("<4sHHQ")
_F32 = np.dtype("<f4")


def spec_bytes(spec: dict[str, Any]) -> bytes:
    return orjson.dumps(spec, option=orjson.OPT_SORT_KEYS)


def spec_hash(spec: dict[str, Any]) -> bytes:
    return hashlib.sha256(spec_bytes(spec)).digest()


def encode_checkpoint(spec: dict[str, Any], tensors: dict[str, np.ndarray], step: int) -> bytes:
    blob = spec_bytes(spec)
    parts = [_HEAD.pack(MAGIC, VERSION, len(tensors), int(step)), spec_hash(spec), struct.pack("<I", len(blob)), blob]
    for name, arr in tensors.items():
        a = np.ascontiguousarray(arr, dtype=_F32)
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape))
        parts.append(a.tobytes())
    return b"".join(parts)


def decode_checkpoint(
    data: bytes, expect: dict[str, Any] | None = None
) -> tuple[dict[str, Any], dict[str, np.ndarray], int]:
    if len(data) < _HEAD.size + 36:
        raise ConfigError("checkpoint is truncated")
    magic, version, n, step = _HEAD.unpack_from(data)
    if magic != MAGIC or version != VERSION:
        raise ConfigError(f"not a v{VERSION} checkpoint")
    off = _HEAD.size
    digest = data[off : off + 32]
    off += 32
    (blen,) = struct.unpack_from("<I", data, off)
    off += 4
    blob = data[off : off + blen]
    off += blen
    if hashlib.sha256(blob).digest() != digest:
        raise ConfigError("checkpoint spec hash does not match its spec")
    spec = orjson.loads(blob)
    if expect is not None and spec_hash(expect) != digest:
        raise ConfigError("checkpoint was written for a different model spec")
    tensors: dict[str, np.ndarray] = {}
    try:
        for _ in range(n):
            (ln,) = struct.unpack_from("<H", data, off)
            off += 2
            name = data[off : off + ln].decode("utf-8")
            off += ln
            (ndim,) = struct.unpack_from("<B", data, off)
            off += 1
            shape = struct.unpack_from(f"<{ndim}I", data, off)
            off += 4 * ndim
            count = int(np.prod(shape)) if ndim else 1
            tensors[name] = np.frombuffer(data, dtype=_F32, count=count, offset=off).reshape(shape).astype(np.float32)
            off += 4 * count
    except (struct.error, ValueError) as exc:
        raise ConfigError(f"checkpoint is truncated: {exc}") from exc
    if off != len(data):
        raise ConfigError("checkpoint has trailing bytes")
    return spec, tensors, int(step)


def save_checkpoint(path: str | Path, spec: dict[str, Any], tensors: dict[str, np.ndarray], step: int) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_bytes(encode_checkpoint(spec, tensors, step))
    return p


def load_checkpoint(
    path: str | Path, expect: dict[str, Any] | None = None
) -> tuple[dict[str, Any], dict[str, np.ndarray], int]:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"no checkpoint at {p}")
    return decode_checkpoint(p.read_bytes(), expect)
