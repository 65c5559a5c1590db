"""Single-file binary checkpoint.

Layout, all integers little-endian:

    magic   b"CWGN"
    u32     format version (currently 1)
    u32 n + n bytes      config text, UTF-8
    u32 n + n bytes      JSON blob: rng state, optimizer step counters
    u64     training step the tensors correspond to
    u32     tensor count, then per tensor:
        u16 n + n bytes  name, UTF-8
        u32     ndim
        u64[ndim] shape
        float32[...] row-major data

Tensors are written sorted by name, so identical state produces identical
bytes.  Writes go through a temp file and os.replace, so a crash cannot
leave a half-written checkpoint under the final name.
"""

from __future__ import annotations

import io
import json
import os
import struct

import numpy as np

MAGIC = b"CWGN"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, config_text: str, step: int, tensors: dict, state: dict):
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    for blob in (config_text.encode(), json.dumps(state, sort_keys=True, default=int).encode()):
        buf.write(struct.pack("<I", len(blob)))
        buf.write(blob)
    buf.write(struct.pack("<Q", step))
    buf.write(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        encoded = name.encode()
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes())
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise CheckpointError(
                f"truncated checkpoint: wanted {n} bytes at offset {self.pos}, "
                f"file has {len(self.raw)}"
            )
        out = self.raw[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        values = struct.unpack(fmt, self.take(struct.calcsize(fmt)))
        return values[0] if len(values) == 1 else values


def load_checkpoint(path):
    with open(path, "rb") as fh:
        r = _Reader(fh.read())
    if r.take(4) != MAGIC:
        raise CheckpointError(f"bad magic in {path}: not a checkpoint file")
    version = r.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    config_text = r.take(r.unpack("<I")).decode()
    state = json.loads(r.take(r.unpack("<I")).decode())
    step = r.unpack("<Q")
    tensors = {}
    for _ in range(r.unpack("<I")):
        name = r.take(r.unpack("<H")).decode()
        ndim = r.unpack("<I")
        shape = struct.unpack(f"<{ndim}Q", r.take(8 * ndim))
        count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        data = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape)
        tensors[name] = data.copy()
    return config_text, step, tensors, state
