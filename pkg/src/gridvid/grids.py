"""Feature-grid data model, trilinear sampling, motion pooling, warping and residuals.

A feature grid stores one C-vector per voxel on a dense (Nx, Ny, Nz) lattice.
Channel 0 holds raw (pre-activation) density; channels 1..C-1 hold color
features. Arrays are indexed ``data[x, y, z, channel]``.

The zero feature vector denotes empty space everywhere in this package:
out-of-bounds warp sources produce it, occupancy masks key on it, and the
renderer skips it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError

DEFAULT_CHANNELS = 13
DEFAULT_KERNEL = 8

MOTION_CLAMP = 127  # storage range of pooled motion components


def _as_vec3(v, dtype=np.float32) -> np.ndarray:
    arr = np.asarray(v, dtype=dtype).reshape(3)
    return arr


@dataclass
class FeatureGrid:
    """Dense 3D lattice of C-channel feature vectors inside an axis-aligned bbox."""

    data: np.ndarray                # (Nx, Ny, Nz, C) float32
    bbox_min: np.ndarray = field(default_factory=lambda: np.zeros(3, np.float32))
    bbox_max: np.ndarray = field(default_factory=lambda: np.ones(3, np.float32))

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 4:
            raise ShapeError(f"feature grid must be 4-D (Nx,Ny,Nz,C), got {self.data.shape}")
        if min(self.data.shape[:3]) < 1 or self.data.shape[3] < 2:
            raise ShapeError(f"invalid grid shape {self.data.shape}: need dims >= 1 and C >= 2")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("feature grid contains non-finite values")
        self.bbox_min = _as_vec3(self.bbox_min)
        self.bbox_max = _as_vec3(self.bbox_max)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape[:3]

    @property
    def channels(self) -> int:
        return self.data.shape[3]

    def copy(self) -> "FeatureGrid":
        return FeatureGrid(self.data.copy(), self.bbox_min.copy(), self.bbox_max.copy())


@dataclass
class DenseMotionField:
    """Per-voxel voxel-unit displacement from frame t into frame t-1."""

    data: np.ndarray                # (Nx, Ny, Nz, 3) float32

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 4 or self.data.shape[3] != 3:
            raise ShapeError(f"motion field must be (Nx,Ny,Nz,3), got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("motion field contains non-finite values")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape[:3]


@dataclass
class MotionGrid:
    """One integer voxel offset per K^3 cube, shared by all voxels of the cube."""

    data: np.ndarray                # (ceil(Nx/K), ceil(Ny/K), ceil(Nz/K), 3) int8
    kernel: int = DEFAULT_KERNEL

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.int8)
        if self.data.ndim != 4 or self.data.shape[3] != 3:
            raise ShapeError(f"motion grid must be (cx,cy,cz,3), got {self.data.shape}")
        if self.kernel < 1:
            raise ValueError("pooling kernel must be >= 1")
        if np.any(self.data == -128):   # storage clamp is symmetric: [-127, 127]
            raise ValueError("motion components must lie in [-127, 127]")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape[:3]


@dataclass
class ResidualGrid:
    """Sparse additive correction with the same shape as its feature grid.

    Stored at float64 so target - base is exact and the zero-threshold
    round trip reproduces the target bit for bit.
    """

    data: np.ndarray                # (Nx, Ny, Nz, C) float64
    threshold: float = 0.0

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.data.ndim != 4:
            raise ShapeError(f"residual grid must be 4-D, got {self.data.shape}")


@dataclass
class OccupancyMask:
    """One bit per K^3 cube; a clear bit promises the cube is all zeros."""

    occupied: np.ndarray            # (cx, cy, cz) bool
    kernel: int = DEFAULT_KERNEL

    def __post_init__(self):
        self.occupied = np.ascontiguousarray(self.occupied, dtype=bool)
        if self.occupied.ndim != 3:
            raise ShapeError(f"occupancy mask must be 3-D, got {self.occupied.shape}")

    @property
    def cube_count(self) -> int:
        return int(self.occupied.sum())


def cube_dims(dims: tuple[int, int, int], kernel: int) -> tuple[int, int, int]:
    return tuple(-(-n // kernel) for n in dims)


def trilinear_sample(data, points: np.ndarray, oob: str = "clamp") -> np.ndarray:
    """Sample a FeatureGrid or (Nx,Ny,Nz,C) array at continuous grid coordinates.

    ``points`` has shape (..., 3) in voxel units; lattice points reproduce the
    stored value exactly. ``oob`` selects the out-of-range policy: "clamp"
    projects onto the grid, "zero" returns the zero vector for points outside
    [0, N-1] on any axis.
    """
    if isinstance(data, FeatureGrid):
        data = data.data
    if oob not in ("clamp", "zero"):
        raise ValueError(f"unknown out-of-bounds policy {oob!r}")
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[-1] != 3:
        raise ShapeError(f"points must have a trailing axis of 3, got {pts.shape}")
    lead = pts.shape[:-1]
    pts = pts.reshape(-1, 3)
    nx, ny, nz = data.shape[:3]
    hi = np.array([nx - 1, ny - 1, nz - 1], dtype=np.float64)

    if oob == "zero":
        inside = np.all((pts >= 0.0) & (pts <= hi), axis=-1)
    clipped = np.clip(pts, 0.0, hi)

    # Lower corner capped one short of the edge so the +1 neighbor exists;
    # single-voxel axes degenerate to frac 0.
    base = np.minimum(np.floor(clipped), np.maximum(hi - 1.0, 0.0)).astype(np.intp)
    frac = clipped - base
    upper = np.minimum(base + 1, hi.astype(np.intp))

    x0, y0, z0 = base[:, 0], base[:, 1], base[:, 2]
    x1, y1, z1 = upper[:, 0], upper[:, 1], upper[:, 2]
    fx, fy, fz = frac[:, 0, None], frac[:, 1, None], frac[:, 2, None]

    out = (
        data[x0, y0, z0] * (1 - fx) * (1 - fy) * (1 - fz)
        + data[x1, y0, z0] * fx * (1 - fy) * (1 - fz)
        + data[x0, y1, z0] * (1 - fx) * fy * (1 - fz)
        + data[x0, y0, z1] * (1 - fx) * (1 - fy) * fz
        + data[x1, y0, z1] * fx * (1 - fy) * fz
        + data[x0, y1, z1] * (1 - fx) * fy * fz
        + data[x1, y1, z0] * fx * fy * (1 - fz)
        + data[x1, y1, z1] * fx * fy * fz
    )
    if oob == "zero":
        out[~inside] = 0.0
    return out.reshape(lead + (data.shape[3],))


def _block_reduce_sum(arr: np.ndarray, kernel: int) -> np.ndarray:
    """Sum over K^3 blocks along the first three axes; partial edge blocks kept."""
    for axis in range(3):
        idx = np.arange(0, arr.shape[axis], kernel)
        arr = np.add.reduceat(arr, idx, axis=axis)
    return arr


def _block_counts(dims: tuple[int, int, int], kernel: int) -> np.ndarray:
    per_axis = []
    for n in dims:
        sizes = np.full(-(-n // kernel), kernel, dtype=np.int64)
        if n % kernel:
            sizes[-1] = n % kernel
        per_axis.append(sizes)
    return per_axis[0][:, None, None] * per_axis[1][None, :, None] * per_axis[2][None, None, :]


def motion_pool(dense: DenseMotionField, kernel: int = DEFAULT_KERNEL) -> MotionGrid:
    """Average-pool a dense motion field over K^3 cubes into one integer offset per cube.

    Boundary cubes average only their existing voxels. Means round to the
    nearest integer with ties away from zero, then clamp to the int8 storage
    range.
    """
    if kernel < 1:
        raise ValueError("pooling kernel must be >= 1")
    sums = _block_reduce_sum(dense.data.astype(np.float64), kernel)
    counts = _block_counts(dense.dims, kernel)
    means = sums / counts[..., None]
    rounded = np.sign(means) * np.floor(np.abs(means) + 0.5)
    clamped = np.clip(rounded, -MOTION_CLAMP, MOTION_CLAMP)
    return MotionGrid(clamped.astype(np.int8), kernel)


def warp_features(prev: FeatureGrid, motion: MotionGrid) -> FeatureGrid:
    """Motion-compensated base grid: out(p) = prev(p + motion(cell(p))).

    Lookup is by integer voxel index; sources falling outside the grid produce
    the zero feature vector (empty space). Every voxel of a cube shares its
    cube's offset, so the warp runs as one shifted block copy per cube.
    """
    dims = prev.dims
    if motion.dims != cube_dims(dims, motion.kernel):
        raise ShapeError(
            f"motion dims {motion.dims} do not match grid dims {dims} under kernel {motion.kernel}"
        )
    k = motion.kernel
    out = np.zeros_like(prev.data)
    offsets = motion.data.astype(np.intp)
    for cx, cy, cz in np.ndindex(motion.dims):
        ox, oy, oz = offsets[cx, cy, cz]
        x0, x1 = cx * k, min(cx * k + k, dims[0])
        y0, y1 = cy * k, min(cy * k + k, dims[1])
        z0, z1 = cz * k, min(cz * k + k, dims[2])
        # Clip the destination so every source index stays inside the grid.
        dx0, dx1 = max(x0, -ox), min(x1, dims[0] - ox)
        dy0, dy1 = max(y0, -oy), min(y1, dims[1] - oy)
        dz0, dz1 = max(z0, -oz), min(z1, dims[2] - oz)
        if dx0 < dx1 and dy0 < dy1 and dz0 < dz1:
            out[dx0:dx1, dy0:dy1, dz0:dz1] = prev.data[
                dx0 + ox:dx1 + ox, dy0 + oy:dy1 + oy, dz0 + oz:dz1 + oz
            ]
    return FeatureGrid(out, prev.bbox_min.copy(), prev.bbox_max.copy())


def apply_residual(base: FeatureGrid, residual: ResidualGrid) -> FeatureGrid:
    """Elementwise sum of a base grid and its residual correction."""
    if base.data.shape != residual.data.shape:
        raise ShapeError(
            f"residual shape {residual.data.shape} != base shape {base.data.shape}"
        )
    summed = base.data.astype(np.float64) + residual.data
    return FeatureGrid(summed.astype(np.float32), base.bbox_min.copy(), base.bbox_max.copy())


def compute_residual(target: FeatureGrid, base: FeatureGrid, tau: float = 0.0) -> ResidualGrid:
    """Thresholded difference target - base; entries below tau in magnitude become 0."""
    if target.data.shape != base.data.shape:
        raise ShapeError(
            f"target shape {target.data.shape} != base shape {base.data.shape}"
        )
    if tau < 0:
        raise ValueError("residual threshold must be >= 0")
    diff = target.data.astype(np.float64) - base.data.astype(np.float64)
    if tau > 0:
        diff = np.where(np.abs(diff) < tau, 0.0, diff)
    return ResidualGrid(diff, tau)


def occupancy_from_grid(tensor: np.ndarray, kernel: int = DEFAULT_KERNEL) -> OccupancyMask:
    """Build a cube occupancy mask: a bit is set iff its cube holds any nonzero value.

    Accepts (Nx,Ny,Nz) or (Nx,Ny,Nz,C) tensors; channels are reduced together.
    """
    nz = tensor != 0
    if nz.ndim == 4:
        nz = nz.any(axis=3)
    elif nz.ndim != 3:
        raise ShapeError(f"expected a 3-D or 4-D tensor, got {tensor.shape}")
    occ = _block_reduce_sum(nz.astype(np.int64), kernel) > 0
    return OccupancyMask(occ, kernel)
