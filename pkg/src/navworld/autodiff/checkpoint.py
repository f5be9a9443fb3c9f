"""Binary checkpoint format for parameter vectors.

Layout: magic ``NAVW``, format version (u32), then one record per parameter
in registry order: name length (u32), name bytes (utf-8), dim count (u32),
dims (u32 each), raw little-endian float32 payload.  All integers are
little-endian.  Round trips are bit-exact for float32 vectors.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import DataError
from .params import ParamVector

MAGIC = b"NAVW"
VERSION = 1


def save_params(path, pv: ParamVector) -> None:
    pv.finalize()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        for name in pv.registry:
            _, shape = pv.registry[name]
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", len(shape)))
            for d in shape:
                fh.write(struct.pack("<I", d))
            fh.write(np.ascontiguousarray(pv.view(name), dtype="<f4").tobytes())


def load_params(path, dtype=np.float32) -> ParamVector:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise DataError(f"{path}: not a checkpoint file (bad magic {data[:4]!r})")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    pos = 8
    records = []
    while pos < len(data):
        (nlen,) = struct.unpack_from("<I", data, pos)
        pos += 4
        name = data[pos : pos + nlen].decode("utf-8")
        pos += nlen
        (ndim,) = struct.unpack_from("<I", data, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        values = np.frombuffer(data, dtype="<f4", count=count, offset=pos).reshape(shape)
        pos += 4 * count
        records.append((name, shape, values))
    pv = ParamVector(dtype=dtype)
    for name, shape, _ in records:
        pv.register(name, shape)
    pv.finalize()
    for name, _, values in records:
        pv.view(name)[...] = values.astype(dtype)
    return pv
