"""Lossy transform stage: channel PCA, cube tiling, 3D DCT, quantization, zigzag.

All cube operations work on 8x8x8 blocks and broadcast over a leading batch
axis, so a whole frame's occupied cubes transform in one call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .grids import OccupancyMask, cube_dims

CUBE = 8
CUBE_VOXELS = CUBE ** 3


def _dct_basis(n: int = CUBE) -> np.ndarray:
    """Orthonormal type-II DCT matrix: B[u, i] = c_u * cos((2i+1) u pi / 2n)."""
    i = np.arange(n)
    u = i[:, None]
    basis = np.cos((2 * i[None, :] + 1) * u * np.pi / (2 * n))
    scale = np.full(n, np.sqrt(2.0 / n))
    scale[0] = np.sqrt(1.0 / n)
    return scale[:, None] * basis


_BASIS = _dct_basis()


def _zigzag_order() -> np.ndarray:
    coords = [(u, v, w) for u in range(CUBE) for v in range(CUBE) for w in range(CUBE)]
    coords.sort(key=lambda t: (t[0] + t[1] + t[2], t))
    return np.array(coords, dtype=np.intp)


ZIGZAG = _zigzag_order()
_UNZIGZAG_FLAT = np.empty(CUBE_VOXELS, dtype=np.intp)
_UNZIGZAG_FLAT[ZIGZAG[:, 0] * CUBE * CUBE + ZIGZAG[:, 1] * CUBE + ZIGZAG[:, 2]] = np.arange(CUBE_VOXELS)


@dataclass
class PCABasis:
    """Orthonormal channel basis; columns are principal directions, strongest first."""

    matrix: np.ndarray              # (n, q) float
    energy: np.ndarray | None = None  # descending eigenvalues of the fit, length q

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2:
            raise ShapeError("PCA basis must be a 2-D matrix")
        if self.energy is None:
            self.energy = np.zeros(self.matrix.shape[1])

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def q(self) -> int:
        return self.matrix.shape[1]


@dataclass
class QuantizationSpec:
    """Scalar quantizer: step size at (u,v,w) is sq * q_matrix[u,v,w]."""

    sq: float
    q_matrix: np.ndarray            # (8, 8, 8), all entries > 0

    def __post_init__(self):
        self.q_matrix = np.asarray(self.q_matrix, dtype=np.float64)
        if self.sq <= 0:
            raise ValueError("quantization scale must be > 0")
        if self.q_matrix.shape != (CUBE, CUBE, CUBE):
            raise ShapeError(f"quantization matrix must be 8x8x8, got {self.q_matrix.shape}")
        if not np.all(self.q_matrix > 0):
            raise ValueError("quantization matrix entries must be > 0")

    @property
    def step(self) -> np.ndarray:
        return self.sq * self.q_matrix


def default_q_matrix() -> np.ndarray:
    """Frequency-weighted ramp 1 + 2*(u+v+w); DC gets the finest step."""
    u, v, w = np.meshgrid(np.arange(CUBE), np.arange(CUBE), np.arange(CUBE), indexing="ij")
    return (1.0 + 2.0 * (u + v + w)).astype(np.float64)


def pca_fit(matrix: np.ndarray, rank: int | None = None) -> PCABasis:
    """Fit principal directions of an (m, n) sample matrix.

    The basis diagonalizes the uncentered column covariance (matching a
    singular value decomposition of the matrix itself, so projection followed
    by back-projection needs no stored mean). Columns are ordered by
    descending eigenvalue; each column's largest-magnitude entry is made
    positive so the fit is deterministic. An all-zero input yields the
    identity basis.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1:
        raise ShapeError(f"PCA input must be a non-empty 2-D matrix, got {m.shape}")
    n = m.shape[1]
    q = n if rank is None else int(rank)
    if not 1 <= q <= n:
        raise ValueError(f"PCA rank must be in [1, {n}], got {q}")
    if not m.any():
        return PCABasis(np.eye(n)[:, :q])
    cov = m.T @ m / m.shape[0]
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    v = eigvecs[:, order[:q]]
    peaks = np.abs(v).argmax(axis=0)
    signs = np.sign(v[peaks, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return PCABasis(v * signs, np.maximum(eigvals[order[:q]], 0.0))


def pca_project(rows: np.ndarray, basis: PCABasis) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.shape[-1] != basis.n:
        raise ShapeError(f"cannot project {rows.shape[-1]} channels through an n={basis.n} basis")
    return rows @ basis.matrix


def pca_backproject(rows: np.ndarray, basis: PCABasis) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.shape[-1] != basis.q:
        raise ShapeError(f"cannot back-project {rows.shape[-1]} channels through a q={basis.q} basis")
    return rows @ basis.matrix.T


def tile_cubes(tensor: np.ndarray, mask: OccupancyMask) -> tuple[np.ndarray, np.ndarray]:
    """Cut a (Nx,Ny,Nz) tensor into the occupied 8^3 cubes of ``mask``.

    Returns (origins, cubes): origins is (m, 3) cube indices in ascending
    (cx, cy, cz) order, cubes is (m, 8, 8, 8). Boundary cubes are zero-padded.
    """
    dims = tensor.shape
    cdims = cube_dims(dims, CUBE)
    if mask.occupied.shape != cdims:
        raise ShapeError(f"mask dims {mask.occupied.shape} do not tile tensor dims {dims}")
    padded = np.zeros((cdims[0] * CUBE, cdims[1] * CUBE, cdims[2] * CUBE), dtype=np.float64)
    padded[: dims[0], : dims[1], : dims[2]] = tensor
    blocks = padded.reshape(cdims[0], CUBE, cdims[1], CUBE, cdims[2], CUBE)
    blocks = blocks.transpose(0, 2, 4, 1, 3, 5)
    origins = np.argwhere(mask.occupied)
    return origins, blocks[mask.occupied]


def untile_cubes(origins: np.ndarray, cubes: np.ndarray, dims: tuple[int, int, int]) -> np.ndarray:
    """Scatter cubes back onto a zero tensor of the given dims (inverse oftile_cubes)."""
    cdims = cube_dims(dims, CUBE)
    padded = np.zeros((cdims[0] * CUBE, cdims[1] * CUBE, cdims[2] * CUBE), dtype=np.float64)
    blocks = padded.reshape(cdims[0], CUBE, cdims[1], CUBE, cdims[2], CUBE).transpose(0, 2, 4, 1, 3, 5)
    if len(origins):
        blocks[origins[:, 0], origins[:, 1], origins[:, 2]] = cubes
    return padded[: dims[0], : dims[1], : dims[2]].copy()


def dct3(cubes: np.ndarray) -> np.ndarray:
    """Separable orthonormal 3D DCT over the last three (8,8,8) axes."""
    return np.einsum("ui,vj,wk,...ijk->...uvw", _BASIS, _BASIS, _BASIS, cubes, optimize=True)


def idct3(coeffs: np.ndarray) -> np.ndarray:
    """Exact inverse of dct3."""
    return np.einsum("ui,vj,wk,...uvw->...ijk", _BASIS, _BASIS, _BASIS, coeffs, optimize=True)


def quantize(coeffs: np.ndarray, spec: QuantizationSpec) -> np.ndarray:
    """Scalar-quantize coefficients: round(R / step), half away from zero."""
    scaled = coeffs / spec.step
    return (np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)).astype(np.int64)


def dequantize(quantized: np.ndarray, spec: QuantizationSpec) -> np.ndarray:
    return quantized * spec.step


def zigzag3(cube: np.ndarray) -> np.ndarray:
    """Linearize (..., 8,8,8) coefficients low-to-high frequency, DC first.

    Coefficients are ordered by ascending u+v+w with lexicographic (u,v,w)
    tie-breaking; the permutation is fixed by the stream version.
    """
    return cube[..., ZIGZAG[:, 0], ZIGZAG[:, 1], ZIGZAG[:, 2]]


def unzigzag3(seq: np.ndarray) -> np.ndarray:
    seq = np.asarray(seq)
    if seq.shape[-1] != CUBE_VOXELS:
        raise ShapeError(f"zigzag sequence must have {CUBE_VOXELS} entries, got {seq.shape[-1]}")
    return seq[..., _UNZIGZAG_FLAT].reshape(seq.shape[:-1] + (CUBE, CUBE, CUBE))
