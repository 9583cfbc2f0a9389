"""Binary checkpoint format.

Layout (little-endian)::

    b"CTN1"  u32 version  u32 n  <n bytes of JSON model config>
    u32 count
    count x [ u32 name_len  <name utf-8>  u32 rank  rank x u32 extent  float32 data ]
    8-byte blake2b digest of everything from ``count`` up to here

The digest is checked before anything in the tensor table is parsed, so any
corrupted byte in the table is reported as a checksum failure.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

from .audio import _atomic_write_bytes
from .errors import CheckpointError, ConfigError
from .model import ModelConfig, ModelParams, parameter_shapes
from .tensor import Tensor

MAGIC = b"CTN1"
VERSION = 1
DIGEST_SIZE = 8


def _digest(payload: bytes) -> bytes:
    return hashlib.blake2b(payload, digest_size=DIGEST_SIZE).digest()


def to_bytes(params: ModelParams) -> bytes:
    cfg = json.dumps(params.config.to_dict(), sort_keys=True).encode("utf-8")
    head = MAGIC + struct.pack("<II", VERSION, len(cfg)) + cfg
    table = [struct.pack("<I", len(params.tensors))]
    for name, t in params:
        raw = name.encode("utf-8")
        data = np.ascontiguousarray(t.data, dtype="<f4")
        table.append(struct.pack("<I", len(raw)) + raw)
        table.append(struct.pack(f"<I{data.ndim}I", data.ndim, *data.shape))
        table.append(data.tobytes())
    body = b"".join(table)
    return head + body + _digest(body)


def from_bytes(blob: bytes) -> ModelParams:
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, n = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = 12 + n
    if pos + 4 + DIGEST_SIZE > len(blob):
        raise CheckpointError("checkpoint is truncated")
    try:
        cfg = ModelConfig.from_dict(json.loads(blob[12:pos].decode("utf-8")))
    except (ValueError, TypeError, ConfigError) as e:
        raise CheckpointError(f"checkpoint config is invalid: {e}") from e
    body, digest = blob[pos:-DIGEST_SIZE], blob[-DIGEST_SIZE:]
    if _digest(body) != digest:
        raise CheckpointError("checkpoint checksum mismatch (file is corrupted)")
    expected = parameter_shapes(cfg)
    tensors: dict[str, Tensor] = {}
    try:
        (count,) = struct.unpack_from("<I", body, 0)
        off = 4
        for _ in range(count):
            (ln,) = struct.unpack_from("<I", body, off)
            name = body[off + 4 : off + 4 + ln].decode("utf-8")
            off += 4 + ln
            (rank,) = struct.unpack_from("<I", body, off)
            shape = struct.unpack_from(f"<{rank}I", body, off + 4)
            off += 4 + 4 * rank
            size = int(np.prod(shape)) if rank else 1
            data = np.frombuffer(body, dtype="<f4", count=size, offset=off).reshape(shape)
            off += 4 * size
            tensors[name] = Tensor(data.astype(np.float32))
    except (struct.error, ValueError, UnicodeDecodeError) as e:
        raise CheckpointError(f"malformed tensor table: {e}") from e
    if off != len(body):
        raise CheckpointError("trailing bytes after tensor table")
    if list(tensors) != list(expected):
        missing = sorted(set(expected) - set(tensors))
        extra = sorted(set(tensors) - set(expected))
        raise CheckpointError(f"tensor names do not match the config (missing {missing}, unexpected {extra})")
    for name, shape in expected.items():
        if tensors[name].shape != shape:
            raise CheckpointError(f"{name} has shape {tensors[name].shape}, config implies {shape}")
    return ModelParams(cfg, tensors)


def save(params: ModelParams, path: str | os.PathLike) -> Path:
    """Write atomically (temporary file then rename)."""
    path = Path(path)
    _atomic_write_bytes(path, to_bytes(params))
    return path


def load(path: str | os.PathLike) -> ModelParams:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    return from_bytes(blob)
