"""Flat binary dump of particle and site configurations.

Layout (little-endian)::

    magic    4s   b"PLAB"
    version  u8   1
    d        u32  dimension
    L        u32  side
    boundary u8   0 = open box, 1 = torus
    width    u8   bytes per value (1, 2, 4 or 8)
    kind     c    b"u" unsigned, b"i" signed, b"f" float
    values        L**d values, row-major
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .lattice import Boundary, LatticeGeometry

MAGIC = b"PLAB"
VERSION = 1
_HEADER = struct.Struct("<4sBIIBBc")
_BOUNDARY_CODES = {Boundary.OPEN_BOX: 0, Boundary.TORUS: 1}


class FormatError(ValueError):
    pass


def dumps(values, geom: LatticeGeometry) -> bytes:
    arr = np.asarray(values).reshape(-1)
    if arr.shape[0] != geom.n_sites:
        raise ValueError(f"{arr.shape[0]} values for a window of {geom.n_sites} sites")
    if arr.dtype == np.bool_:
        arr = arr.astype(np.uint8)
    kind = arr.dtype.kind
    if kind not in "uif":
        raise ValueError(f"cannot serialize dtype {arr.dtype}")
    arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
    header = _HEADER.pack(
        MAGIC, VERSION, geom.dimension, geom.side,
        _BOUNDARY_CODES[geom.boundary], arr.dtype.itemsize, kind.encode(),
    )
    return header + arr.tobytes(order="C")


def loads(data: bytes) -> tuple[np.ndarray, LatticeGeometry]:
    if len(data) < _HEADER.size:
        raise FormatError("truncated header")
    magic, version, d, L, bcode, width, kind = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    boundary = {v: k for k, v in _BOUNDARY_CODES.items()}.get(bcode)
    if boundary is None:
        raise FormatError(f"bad boundary code {bcode}")
    geom = LatticeGeometry(d, L, boundary)
    dtype = np.dtype(f"<{kind.decode()}{width}")
    body = data[_HEADER.size:]
    if len(body) != geom.n_sites * width:
        raise FormatError(f"expected {geom.n_sites * width} payload bytes, got {len(body)}")
    values = np.frombuffer(body, dtype=dtype).astype(dtype.newbyteorder("="))
    return values, geom


def write_config(path: str | Path, values, geom: LatticeGeometry) -> None:
    Path(path).write_bytes(dumps(values, geom))


def read_config(path: str | Path) -> tuple[np.ndarray, LatticeGeometry]:
    return loads(Path(path).read_bytes())
