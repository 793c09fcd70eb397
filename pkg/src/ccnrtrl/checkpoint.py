"""Versioned binary checkpoints: a list of named, typed arrays.

Layout (little-endian)::

    magic b"CCNCKPT\\0", version u16, section count u32
    per section: name_len u16, name, dtype_len u8, dtype str, ndim u8,
                 shape u64 * ndim, nbytes u64, raw bytes (C order)

Loading and saving again reproduces the file byte for byte.
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"CCNCKPT\0"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _le(a):
    a = np.ascontiguousarray(a)
    if a.dtype.byteorder == ">" or (a.dtype.byteorder == "=" and not np.little_endian):
        a = a.astype(a.dtype.newbyteorder("<"))
    return a


def dumps(sections: dict) -> bytes:
    parts = [MAGIC, struct.pack("<HI", VERSION, len(sections))]
    for name, arr in sections.items():
        a = _le(np.asarray(arr))
        if a.dtype == object:
            raise CheckpointError(f"section {name!r} is not a numeric array")
        key = name.encode("utf-8")
        dt = a.dtype.str.encode("ascii")
        parts.append(struct.pack("<H", len(key)) + key)
        parts.append(struct.pack("<B", len(dt)) + dt)
        parts.append(struct.pack("<B", a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape))
        raw = a.tobytes()
        parts.append(struct.pack("<Q", len(raw)) + raw)
    return b"".join(parts)


def loads(buf: bytes) -> dict:
    if buf[:8] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    pos = 8

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError("checkpoint is truncated")
        out = buf[pos:pos + n]
        pos += n
        return out

    version, count = struct.unpack("<HI", take(6))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    out = {}
    for _ in range(count):
        (n,) = struct.unpack("<H", take(2))
        name = take(n).decode("utf-8")
        (n,) = struct.unpack("<B", take(1))
        dtype = np.dtype(take(n).decode("ascii"))
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim))
        (nbytes,) = struct.unpack("<Q", take(8))
        out[name] = np.frombuffer(take(nbytes), dtype=dtype).reshape(shape).copy()
    if pos != len(buf):
        raise CheckpointError("trailing bytes after last section")
    return out


def save(path, sections: dict):
    data = dumps(sections)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def load(path) -> dict:
    with open(path, "rb") as fh:
        return loads(fh.read())


def prefixed(prefix, arrays):
    return {f"{prefix}/{k}": v for k, v in arrays.items()}


def unprefixed(prefix, sections):
    head = prefix + "/"
    return {k[len(head):]: v for k, v in sections.items() if k.startswith(head)}
