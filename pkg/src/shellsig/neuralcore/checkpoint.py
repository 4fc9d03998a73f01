"""Binary checkpoint format.

Layout (all integers little-endian)::

    offset  size  field
    0       8     magic b"SSIGCKPT"
    8       4     format version (uint32, currently 1)
    12      4     header length H in bytes (uint32)
    16      H     UTF-8 JSON header: {"config": {...}, "tensors": [...]}
    16+H    ...   raw float64 (<f8) blobs, one per manifest entry, C order

Each manifest entry is ``{"name": str, "kind": "param"|"buffer", "shape": [..]}``
and the blobs follow in manifest order. The JSON is written with sorted
keys and fixed separators, so identical models give identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import ArchMismatch, CheckpointError
from .layers import Module

MAGIC = b"SSIGCKPT"
VERSION = 1


def _entries(model: Module):
    for name, t in model.named_parameters():
        yield name, "param", t.data
    for name, arr in model.named_buffers():
        yield name, "buffer", arr


def to_bytes(model: Module, config: dict) -> bytes:
    manifest, blobs = [], []
    for name, kind, arr in _entries(model):
        manifest.append({"name": name, "kind": kind, "shape": list(arr.shape)})
        blobs.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    header = json.dumps({"config": config, "tensors": manifest}, sort_keys=True, separators=(",", ":")).encode()
    return b"".join([MAGIC, struct.pack("<II", VERSION, len(header)), header] + blobs)


def save_checkpoint(path, model: Module, config: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(to_bytes(model, config))
    return path


def read_checkpoint(path_or_bytes) -> tuple[dict, dict[str, np.ndarray]]:
    """Parse a checkpoint into ``(config, {name: array})``."""
    raw = path_or_bytes if isinstance(path_or_bytes, bytes) else Path(path_or_bytes).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError("not a shellsig checkpoint (bad magic)")
    version, hlen = struct.unpack("<II", raw[8:16])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header = json.loads(raw[16 : 16 + hlen].decode())
    offset = 16 + hlen
    arrays = {}
    for entry in header["tensors"]:
        n = int(np.prod(entry["shape"], dtype=np.int64))
        arr = np.frombuffer(raw, dtype="<f8", count=n, offset=offset).reshape(entry["shape"])
        arrays[entry["name"]] = arr.astype(np.float64)
        offset += 8 * n
    if offset != len(raw):
        raise CheckpointError("trailing or missing bytes in checkpoint")
    return header["config"], arrays


def load_state(model: Module, arrays: dict[str, np.ndarray]) -> None:
    """Copy arrays into ``model``; names and shapes must match exactly."""
    expected = {name: arr.shape for name, _, arr in _entries(model)}
    if set(expected) != set(arrays):
        missing = sorted(set(expected) ^ set(arrays))[:5]
        raise ArchMismatch(f"checkpoint tensors do not match the model (e.g. {missing})")
    for name, t in model.named_parameters():
        if arrays[name].shape != t.shape:
            raise ArchMismatch(f"{name}: checkpoint {arrays[name].shape} vs model {t.shape}")
        t.data[...] = arrays[name]
    _assign_buffers(model, arrays, "")


def _assign_buffers(module: Module, arrays, prefix):
    for k in list(getattr(module, "_buffers", {})):
        src = arrays[prefix + k]
        if src.shape != module._buffers[k].shape:
            raise ArchMismatch(f"{prefix + k}: shape mismatch")
        module._buffers[k] = src.copy()
    for name, value in module.__dict__.items():
        if isinstance(value, Module):
            _assign_buffers(value, arrays, prefix + name + ".")
        elif isinstance(value, (list, tuple)):
            for i, m in enumerate(value):
                if isinstance(m, Module):
                    _assign_buffers(m, arrays, f"{prefix}{name}.{i}.")
