"""Binary dump format for IF cubes and magnitude volumes.

Layout: a 32-byte header (magic, version, payload kind, ndim, dims) followed
by little-endian float32 data, interleaved re/im for complex payloads. The
format is lossless for the complex64 cubes the simulator emits.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Union

import numpy as np

MAGIC = b"CSCN"
VERSION = 1
KIND_COMPLEX = 0
KIND_FLOAT = 1

_HEADER = struct.Struct("<4sBBBB4IQ")  # magic, version, kind, ndim, pad, dims, reserved
assert _HEADER.size == 32


def write_cube(path: Union[str, Path], cube: np.ndarray) -> None:
    cube = np.asarray(cube)
    if cube.ndim < 1 or cube.ndim > 4:
        raise ValueError(f"cube must have 1-4 dimensions, got {cube.ndim}")
    if np.iscomplexobj(cube):
        kind = KIND_COMPLEX
        payload = np.ascontiguousarray(cube, dtype=np.complex64)
    else:
        kind = KIND_FLOAT
        payload = np.ascontiguousarray(cube, dtype=np.float32)
    dims = list(cube.shape) + [1] * (4 - cube.ndim)
    header = _HEADER.pack(MAGIC, VERSION, kind, cube.ndim, 0, *dims, 0)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.astype("<c8" if kind == KIND_COMPLEX else "<f4").tobytes())


def read_cube(path: Union[str, Path]) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise ValueError(f"{path}: truncated cube header")
        magic, version, kind, ndim, _, d0, d1, d2, d3, _ = _HEADER.unpack(raw)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a cube file")
        if version != VERSION:
            raise ValueError(f"{path}: unsupported cube version {version}")
        if kind not in (KIND_COMPLEX, KIND_FLOAT):
            raise ValueError(f"{path}: unknown payload kind {kind}")
        if not 1 <= ndim <= 4:
            raise ValueError(f"{path}: bad dimension count {ndim}")
        shape = (d0, d1, d2, d3)[:ndim]
        count = int(np.prod(shape))
        dtype = np.dtype("<c8") if kind == KIND_COMPLEX else np.dtype("<f4")
        data = fh.read(count * dtype.itemsize)
        if len(data) != count * dtype.itemsize:
            raise ValueError(f"{path}: truncated cube payload")
    arr = np.frombuffer(data, dtype=dtype).reshape(shape)
    return arr.astype(np.complex64 if kind == KIND_COMPLEX else np.float32)
