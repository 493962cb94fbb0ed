"""Checkpoint container.

Layout (little-endian):
    b"SFMK1\\n"
    u32 manifest length, manifest (UTF-8 key=value text)
    u32 entry count
    per entry: u16 name length, name, u8 ndim, u32 dims..., float32 values
"""
from __future__ import annotations

import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

MAGIC = b"SFMK1\n"


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, entries: dict, manifest: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    man = manifest.encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(man)))
        f.write(man)
        f.write(struct.pack("<I", len(entries)))
        for name, arr in entries.items():
            arr = np.asarray(arr, dtype="<f4")
            raw = name.encode("utf-8")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes(order="C"))


def load_checkpoint(path) -> tuple:
    """Returns (entries, manifest_text)."""
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise CheckpointError(f"{path}: missing SFMK1 header")
    off = len(MAGIC)

    def take(fmt):
        nonlocal off
        vals = struct.unpack_from(fmt, data, off)
        off += struct.calcsize(fmt)
        return vals

    try:
        (mlen,) = take("<I")
        manifest = data[off : off + mlen].decode("utf-8")
        off += mlen
        (count,) = take("<I")
        entries = OrderedDict()
        for _ in range(count):
            (nlen,) = take("<H")
            name = data[off : off + nlen].decode("utf-8")
            off += nlen
            (ndim,) = take("<B")
            shape = take(f"<{ndim}I") if ndim else ()
            n = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(data, dtype="<f4", count=n, offset=off).reshape(shape)
            off += 4 * n
            entries[name] = arr.astype(np.float32)
    except (struct.error, ValueError) as e:
        raise CheckpointError(f"{path}: truncated checkpoint") from e
    if off != len(data):
        raise CheckpointError(f"{path}: {len(data) - off} trailing bytes")
    return entries, manifest
