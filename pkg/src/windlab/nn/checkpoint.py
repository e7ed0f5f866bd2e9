"""Binary checkpoint container for named parameter arrays.

Layout (all integers little-endian):

    magic   4 bytes  b"WLCP"
    version u16      1
    count   u32      number of entries
    entry*  name_len u16, name utf-8, dtype u8 (0=float32, 1=float64),
            ndim u8, dims u32 * ndim
    payload contiguous little-endian array bytes, entry order

Writes are atomic (temp file + rename).  A JSON sidecar with model/config
metadata may sit next to the file; this module only handles the arrays.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

__all__ = ["save_checkpoint", "load_checkpoint", "CheckpointError"]

_MAGIC = b"WLCP"
_VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}


class CheckpointError(ValueError):
    pass


def save_checkpoint(arrays: dict[str, np.ndarray], path: str | Path):
    path = Path(path)
    header = [struct.pack("<4sHI", _MAGIC, _VERSION, len(arrays))]
    payload = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype not in _CODES:
            raise CheckpointError(f"unsupported dtype {arr.dtype} for '{name}'")
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise CheckpointError(f"name too long: '{name[:40]}...'")
        header.append(struct.pack("<H", len(raw)))
        header.append(raw)
        header.append(struct.pack("<BB", _CODES[arr.dtype], arr.ndim))
        header.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        payload.append(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())

    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            for chunk in header:
                f.write(chunk)
            for chunk in payload:
                f.write(chunk)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 10 or blob[:4] != _MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, count = struct.unpack_from("<HI", blob, 4)
    if version != _VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")

    offset = 10
    entries = []
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset:offset + name_len].decode("utf-8")
        offset += name_len
        code, ndim = struct.unpack_from("<BB", blob, offset)
        offset += 2
        if code not in _DTYPES:
            raise CheckpointError(f"{path}: unknown dtype code {code}")
        shape = struct.unpack_from(f"<{ndim}I", blob, offset)
        offset += 4 * ndim
        entries.append((name, _DTYPES[code], shape))

    out: dict[str, np.ndarray] = {}
    for name, dtype, shape in entries:
        n_bytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if offset + n_bytes > len(blob):
            raise CheckpointError(f"{path}: truncated payload at '{name}'")
        arr = np.frombuffer(blob, dtype=dtype, count=int(np.prod(shape, dtype=np.int64)),
                            offset=offset).reshape(shape)
        out[name] = arr.astype(dtype.newbyteorder("="), copy=True)
        offset += n_bytes
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} trailing bytes")
    return out
