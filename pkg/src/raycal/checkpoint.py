"""Binary checkpoint files.

Layout (all integers little-endian)::

    magic     8 bytes  b"RAYCKPT\\0"
    version   u32      currently 1
    meta_len  u32      length of the JSON metadata block
    meta      utf-8 JSON (stage, epoch, rng state, config, optimiser counters)
    count     u32      number of buffers
    per buffer:
        name_len u16, name (utf-8)
        ndim     u8,  dims u64 x ndim
        data     float64 x prod(dims), row-major
"""

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ValidationError

MAGIC = b"RAYCKPT\0"
VERSION = 1


def save_buffers(path, buffers: dict, meta: dict) -> None:
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(buffers)))
        for name, arr in buffers.items():
            arr = np.array(arr, dtype="<f8", order="C")  # ascontiguousarray would promote 0-d to 1-d
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())


def load_buffers(path):
    """Return ``(buffers, meta)`` from a checkpoint file."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValidationError(f"{path}: not a checkpoint file")
    version, meta_len = struct.unpack_from("<II", raw, 8)
    if version != VERSION:
        raise ValidationError(f"{path}: unsupported checkpoint version {version}")
    pos = 16
    meta = json.loads(raw[pos:pos + meta_len].decode("utf-8"))
    pos += meta_len
    (count,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    buffers = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        name = raw[pos:pos + n].decode("utf-8")
        pos += n
        (ndim,) = struct.unpack_from("<B", raw, pos)
        pos += 1
        dims = struct.unpack_from(f"<{ndim}Q", raw, pos)
        pos += 8 * ndim
        size = int(np.prod(dims)) if ndim else 1
        buffers[name] = np.frombuffer(raw, dtype="<f8", count=size, offset=pos).reshape(dims).copy()
        pos += 8 * size
    if pos != len(raw):
        raise ValidationError(f"{path}: {len(raw) - pos} trailing bytes")
    return buffers, meta
