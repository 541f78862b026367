"""Raw grid interchange files.

Both formats are little-endian with the layout

    magic (4s) | version u32 | Nx u32 | Ny u32 | Nz u32 | C u32 | bbox 6*f32
    payload: f32 values, x fastest, then y, then z, channel-major

"RRFG" carries feature grids (any C >= 2), "RRFM" dense motion fields (C = 3).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .grids import DenseMotionField, FeatureGrid

GRID_MAGIC = b"RRFG"
MOTION_MAGIC = b"RRFM"
FILE_VERSION = 1

_HEADER = struct.Struct("<4sI4I6f")


def _pack_header(magic: bytes, dims, channels: int, bbox_min, bbox_max) -> bytes:
    return _HEADER.pack(magic, FILE_VERSION, *dims, channels, *bbox_min, *bbox_max)


def _payload_bytes(data: np.ndarray) -> bytes:
    # (x,y,z,c) -> file order (c,z,y,x) with x varying fastest
    return np.ascontiguousarray(data.transpose(3, 2, 1, 0), dtype="<f4").tobytes()


def _parse(buf: bytes, expect_magic: bytes, path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if len(buf) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, nx, ny, nz, c, *bbox = _HEADER.unpack_from(buf, 0)
    if magic != expect_magic:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {expect_magic!r}")
    if version != FILE_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    count = nx * ny * nz * c
    expected = _HEADER.size + 4 * count
    if len(buf) < expected:
        raise FormatError(f"{path}: truncated payload ({len(buf)} < {expected} bytes)")
    flat = np.frombuffer(buf, dtype="<f4", count=count, offset=_HEADER.size)
    data = flat.reshape(c, nz, ny, nx).transpose(3, 2, 1, 0)
    return np.ascontiguousarray(data), np.array(bbox[:3], np.float32), np.array(bbox[3:], np.float32)


def write_feature_grid(path, grid: FeatureGrid) -> None:
    header = _pack_header(GRID_MAGIC, grid.dims, grid.channels, grid.bbox_min, grid.bbox_max)
    Path(path).write_bytes(header + _payload_bytes(grid.data))


def read_feature_grid(path) -> FeatureGrid:
    data, bbox_min, bbox_max = _parse(Path(path).read_bytes(), GRID_MAGIC, path)
    return FeatureGrid(data, bbox_min, bbox_max)


def write_motion_field(path, field: DenseMotionField, bbox_min=(0, 0, 0), bbox_max=(0, 0, 0)) -> None:
    header = _pack_header(MOTION_MAGIC, field.dims, 3, bbox_min, bbox_max)
    Path(path).write_bytes(header + _payload_bytes(field.data))


def read_motion_field(path) -> DenseMotionField:
    data, _, _ = _parse(Path(path).read_bytes(), MOTION_MAGIC, path)
    if data.shape[3] != 3:
        raise FormatError(f"{path}: motion field must have 3 channels, got {data.shape[3]}")
    return DenseMotionField(data)
