"""Flat binary checkpoints: named tensors plus a JSON metadata header.

Layout (little-endian): magic, format version, metadata JSON (carries the
model config so stage-3 training can shape-check against a stage-2
checkpoint before loading), then per tensor: name, dtype code, shape,
payload. float32 and float64 payloads are supported.
"""

from __future__ import annotations

import json
import struct

import numpy as np

_MAGIC = b"USEVCKPT"
_VERSION = 1
_DTYPES = {0: "<f4", 1: "<f8"}
_DTYPE_CODES = {"float32": 0, "float64": 1}


def save_checkpoint(path, tensors: dict, meta: dict | None = None,
                    dtype: str = "float64") -> None:
    code = _DTYPE_CODES[dtype]
    np_dtype = _DTYPES[code]
    meta_blob = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<II", _VERSION, len(meta_blob)))
        f.write(meta_blob)
        f.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.asarray(arr)
            blob = name.encode("utf-8")
            f.write(struct.pack("<H", len(blob)))
            f.write(blob)
            f.write(struct.pack("<BB", code, arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.astype(np_dtype).tobytes())


def load_checkpoint(path) -> tuple[dict, dict]:
    """Returns (tensors as float64 arrays, metadata dict)."""
    with open(path, "rb") as f:
        if f.read(8) != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        version, meta_len = struct.unpack("<II", f.read(8))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        meta = json.loads(f.read(meta_len).decode("utf-8"))
        (count,) = struct.unpack("<I", f.read(4))
        tensors = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", f.read(2))
            name = f.read(name_len).decode("utf-8")
            code, ndim = struct.unpack("<BB", f.read(2))
            if code not in _DTYPES:
                raise ValueError(f"{path}: unknown dtype code {code} for {name}")
            shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
            n_bytes = int(np.prod(shape, dtype=np.int64)) * int(_DTYPES[code][-1])
            payload = f.read(n_bytes)
            if len(payload) != n_bytes:
                raise ValueError(f"{path}: truncated payload for {name}")
            tensors[name] = np.frombuffer(payload, dtype=_DTYPES[code]) \
                .astype(np.float64).reshape(shape)
    return tensors, meta
