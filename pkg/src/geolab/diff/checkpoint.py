"""Parameter checkpoints.

Binary layout (little-endian throughout):
    magic "EGWT", version u32, parameter count u32, then per parameter:
    name length u16 + UTF-8 name bytes, frozen u8, rank u8, one u32 extent
    per rank, then float64 values in row-major order.
An optional architecture descriptor (structured text) follows the last
parameter record and runs to end-of-file.
"""
from __future__ import annotations

import struct

import numpy as np

from ..errors import FormatError
from .tensor import Parameter

MAGIC = b"EGWT"
VERSION = 1


def save_checkpoint(path, params, descriptor: str = ""):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(params)))
        for p in params:
            name = p.name.encode("utf-8")
            data = np.ascontiguousarray(p.data, dtype="<f8")
            fh.write(struct.pack("<H", len(name)))
            fh.write(name)
            fh.write(struct.pack("<BB", 1 if p.frozen else 0, data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.tobytes())
        if descriptor:
            fh.write(descriptor.encode("utf-8"))


def _read(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated checkpoint while reading {what}")
    return buf


def load_checkpoint(path):
    """Return (list of Parameter, descriptor string)."""
    with open(path, "rb") as fh:
        if _read(fh, 4, "magic") != MAGIC:
            raise FormatError("bad magic, not an EGWT checkpoint")
        version, count = struct.unpack("<II", _read(fh, 8, "header"))
        if version != VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        params = []
        for i in range(count):
            (nlen,) = struct.unpack("<H", _read(fh, 2, f"name length #{i}"))
            name = _read(fh, nlen, f"name #{i}").decode("utf-8")
            frozen, rank = struct.unpack("<BB", _read(fh, 2, f"flags of {name}"))
            shape = struct.unpack(f"<{rank}I", _read(fh, 4 * rank, f"extents of {name}"))
            n = int(np.prod(shape)) if rank else 1
            values = np.frombuffer(
                _read(fh, 8 * n, f"values of {name}"), dtype="<f8"
            ).reshape(shape)
            params.append(Parameter(values, name=name, frozen=bool(frozen)))
        descriptor = fh.read().decode("utf-8")
    return params, descriptor
