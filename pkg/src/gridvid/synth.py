"""Deterministic synthetic dynamic scenes: moving blobs with exact motion fields.

Each frame rasterizes blobs into a feature grid (channel 0 raw density,
channels 1..3 direct-mode color logits, the rest zero) and emits the exact
dense displacement field from frame t back to frame t-1: the constant
negated blob velocity over the blob's current and vacated support, zero in
empty space.

Blob centers that land within 1e-6 of a voxel lattice point snap onto it, so
integer-velocity paths translate the rasterization exactly. A box blob whose
support and velocity align to the 8-voxel cube tiling then warps back onto
the previous frame with zero residual, which is the sharpest end-to-end
codec check available.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grids import DEFAULT_CHANNELS, DenseMotionField, FeatureGrid
from .gridio import write_feature_grid, write_motion_field

GAUSS_FALLOFF = 4.5             # exponent at the truncation radius: e^-4.5 ~ 0.011
CUBE_ALIGN = 8                  # motion regions align to the transform cube tiling
COLOR_TEXTURE_LOGITS = 6.0      # color-feature swing per unit texture amplitude


def color_logit(color) -> np.ndarray:
    c = np.clip(np.asarray(color, dtype=np.float64), 1e-3, 1.0 - 1e-3)
    return np.log(c / (1.0 - c))


@dataclass
class Blob:
    """One moving blob: a world-space path plus shape, size, density and color.

    ``texture_amp`` modulates density and color features with sinusoids of the
    blob-local offset, so texture translates with the blob and stays exactly
    motion-compensable.
    """

    path: list                      # per-frame world position, len == frames
    radius: float | tuple           # world units; scalar or per-axis
    density: float                  # peak raw density (channel 0)
    color: tuple[float, float, float] = (0.8, 0.8, 0.8)
    shape: str = "gaussian"         # "gaussian" | "box"
    texture_amp: float = 0.0        # 0 disables, < 1 keeps density positive
    texture_freq: float = 0.8       # radians per voxel

    def __post_init__(self):
        if self.shape not in ("gaussian", "box"):
            raise ValueError(f"unknown blob shape {self.shape!r}")
        self.radius = np.broadcast_to(np.asarray(self.radius, np.float64), (3,)).copy()
        if np.any(self.radius <= 0) or self.density <= 0:
            raise ValueError("blob radius and density must be > 0")
        if not 0.0 <= self.texture_amp < 1.0:
            raise ValueError("texture amplitude must be in [0, 1)")


@dataclass
class SceneSpec:
    dims: tuple[int, int, int] = (64, 64, 64)
    channels: int = DEFAULT_CHANNELS
    frames: int = 1
    bbox_min: tuple[float, float, float] = (0.0, 0.0, 0.0)
    bbox_max: tuple[float, float, float] = (1.0, 1.0, 1.0)
    blobs: list[Blob] = field(default_factory=list)
    seed: int = 0

    def __post_init__(self):
        if self.frames < 1:
            raise ValueError("frame count must be >= 1")
        if self.channels < 4:
            raise ValueError("need at least 4 channels (density + RGB features)")
        bmin = np.asarray(self.bbox_min, np.float64)
        bmax = np.asarray(self.bbox_max, np.float64)
        for b, blob in enumerate(self.blobs):
            if len(blob.path) != self.frames:
                raise ValueError(f"blob {b} path has {len(blob.path)} positions, need {self.frames}")
            for t, pos in enumerate(blob.path):
                p = np.asarray(pos, np.float64)
                if np.any(p - blob.radius < bmin) or np.any(p + blob.radius > bmax):
                    raise ValueError(f"blob {b} leaves the bbox margin at frame {t}")

    @property
    def extent(self) -> np.ndarray:
        return np.asarray(self.bbox_max, np.float64) - np.asarray(self.bbox_min, np.float64)

    def world_to_voxel(self, pos) -> np.ndarray:
        scale = (np.asarray(self.dims, np.float64) - 1.0) / self.extent
        return (np.asarray(pos, np.float64) - np.asarray(self.bbox_min, np.float64)) * scale

    def voxel_to_world(self, vox) -> np.ndarray:
        scale = self.extent / (np.asarray(self.dims, np.float64) - 1.0)
        return np.asarray(self.bbox_min, np.float64) + np.asarray(vox, np.float64) * scale

    def to_json(self) -> dict:
        return {
            "dims": list(self.dims),
            "channels": self.channels,
            "frames": self.frames,
            "bbox": [list(self.bbox_min), list(self.bbox_max)],
            "seed": self.seed,
            "blobs": [
                {
                    "path": [list(map(float, p)) for p in blob.path],
                    "radius": [float(r) for r in blob.radius],
                    "density": blob.density,
                    "color": list(blob.color),
                    "shape": blob.shape,
                    "texture_amp": blob.texture_amp,
                    "texture_freq": blob.texture_freq,
                }
                for blob in self.blobs
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "SceneSpec":
        frames = int(doc.get("frames", 1))
        blobs = []
        for raw in doc.get("blobs", []):
            if "path" in raw:
                path = [np.asarray(p, np.float64) for p in raw["path"]]
            else:
                center = np.asarray(raw["center"], np.float64)
                velocity = np.asarray(raw.get("velocity", (0.0, 0.0, 0.0)), np.float64)
                path = [center + t * velocity for t in range(frames)]
            radius = raw["radius"]
            blobs.append(Blob(
                path=path,
                radius=tuple(radius) if isinstance(radius, (list, tuple)) else float(radius),
                density=float(raw["density"]),
                color=tuple(raw.get("color", (0.8, 0.8, 0.8))),
                shape=raw.get("shape", "gaussian"),
                texture_amp=float(raw.get("texture_amp", 0.0)),
                texture_freq=float(raw.get("texture_freq", 0.8)),
            ))
        bbox = doc.get("bbox", [[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
        return cls(
            dims=tuple(int(n) for n in doc.get("dims", (64, 64, 64))),
            channels=int(doc.get("channels", DEFAULT_CHANNELS)),
            frames=frames,
            bbox_min=tuple(bbox[0]),
            bbox_max=tuple(bbox[1]),
            blobs=blobs,
            seed=int(doc.get("seed", 0)),
        )


def _snap(center: np.ndarray) -> np.ndarray:
    # Half-voxel resolution: integer-step paths and cube-aligned box extents
    # must survive world<->voxel float round trips exactly.
    rounded = np.rint(center * 2.0) / 2.0
    return np.where(np.abs(center - rounded) < 1e-6, rounded, center)


def _voxel_centers(spec: SceneSpec, blob: Blob) -> list[np.ndarray]:
    return [_snap(spec.world_to_voxel(p)) for p in blob.path]


def _voxel_radii(spec: SceneSpec, blob: Blob) -> np.ndarray:
    scale = (np.asarray(spec.dims, np.float64) - 1.0) / spec.extent
    return _snap(blob.radius * scale)


def _support_bounds(spec: SceneSpec, blob: Blob, center_vox: np.ndarray):
    radii = _voxel_radii(spec, blob)
    lo = np.maximum(np.floor(center_vox - radii).astype(int), 0)
    hi = np.minimum(np.ceil(center_vox + radii).astype(int), np.asarray(spec.dims) - 1)
    return lo, hi


def _support_and_values(spec: SceneSpec, blob: Blob, center_vox: np.ndarray):
    """Support mask, density values and color offsets of one blob at one frame."""
    radii = _voxel_radii(spec, blob)
    lo, hi = _support_bounds(spec, blob, center_vox)
    axes = [np.arange(lo[a], hi[a] + 1, dtype=np.float64) for a in range(3)]
    offsets = [axes[a] - center_vox[a] for a in range(3)]
    delta = [offsets[a] / radii[a] for a in range(3)]
    region = tuple(slice(lo[a], hi[a] + 1) for a in range(3))
    if blob.shape == "box":
        inside = (
            (np.abs(delta[0]) <= 1.0)[:, None, None]
            & (np.abs(delta[1]) <= 1.0)[None, :, None]
            & (np.abs(delta[2]) <= 1.0)[None, None, :]
        )
        base = np.where(inside, blob.density, 0.0)
    else:
        rho2 = (
            (delta[0] ** 2)[:, None, None]
            + (delta[1] ** 2)[None, :, None]
            + (delta[2] ** 2)[None, None, :]
        )
        inside = rho2 <= 1.0
        base = np.where(inside, blob.density * np.exp(-GAUSS_FALLOFF * rho2), 0.0)

    color_tex = None
    if blob.texture_amp > 0.0:
        # Additive per-axis sinusoids at three frequencies: their cube DCTs
        # concentrate in a few strong coefficients, so the texture keeps
        # coding mass even under coarse quantization.
        freqs = (blob.texture_freq, 2.3 * blob.texture_freq, 3.7 * blob.texture_freq)
        phases = (0.9, 2.1, 4.2, 1.7, 3.9, 0.4, 2.8, 5.1, 1.3)
        shapes = ((-1, 1, 1), (1, -1, 1), (1, 1, -1))
        planes = [
            np.sin(w * offsets[a] + phases[3 * f + a]).reshape(shapes[a])
            for f, w in enumerate(freqs)
            for a in range(3)
        ]
        # Normalize by 6 (not 9): individual plane waves keep enough amplitude
        # to survive coarse quantization; raw density may dip negative, which
        # the data model allows (softplus maps it to near-zero opacity).
        ripple = sum(planes) / 6.0
        base = base * (1.0 + blob.texture_amp * ripple)
        camp = COLOR_TEXTURE_LOGITS * blob.texture_amp
        color_tex = [
            np.broadcast_to(camp * (planes[0] + planes[4] + planes[8]) / 3.0, base.shape),
            np.broadcast_to(camp * (planes[1] + planes[5] + planes[6]) / 3.0, base.shape),
            np.broadcast_to(camp * (planes[2] + planes[3] + planes[7]) / 3.0, base.shape),
        ]
    return region, inside, base, color_tex


def generate_sequence(spec: SceneSpec):
    """Rasterize the scene; returns (grids, motion fields, spec echo).

    motions[t-1] holds the displacement from frame t voxels into frame t-1.
    """
    dims = tuple(spec.dims)
    centers = [_voxel_centers(spec, blob) for blob in spec.blobs]
    grids: list[FeatureGrid] = []
    motions: list[DenseMotionField] = []

    for t in range(spec.frames):
        data = np.zeros(dims + (spec.channels,), dtype=np.float64)
        for b, blob in enumerate(spec.blobs):
            region, inside, values, color_tex = _support_and_values(spec, blob, centers[b][t])
            dens = data[region + (0,)]
            wins = inside & (values > dens)
            dens[wins] = values[wins]
            data[region + (0,)] = dens
            logits = color_logit(blob.color)
            for ch in range(3):
                chan = data[region + (ch + 1,)]
                painted = logits[ch]
                if color_tex is not None:
                    painted = painted + color_tex[ch]
                    chan[wins] = painted[wins]
                else:
                    chan[wins] = painted
                data[region + (ch + 1,)] = chan
        grids.append(FeatureGrid(
            data.astype(np.float32),
            np.asarray(spec.bbox_min, np.float32),
            np.asarray(spec.bbox_max, np.float32),
        ))

        if t > 0:
            motion = np.zeros(dims + (3,), dtype=np.float64)
            for b, blob in enumerate(spec.blobs):
                displacement = centers[b][t - 1] - centers[b][t]
                # The blob owns the cube-aligned hull of its current support
                # plus the vacated trail, so pooling recovers the velocity
                # exactly and integer translations warp back residual-free.
                lo_t, hi_t = _support_bounds(spec, blob, centers[b][t])
                lo_p, hi_p = _support_bounds(spec, blob, centers[b][t - 1])
                lo = (np.minimum(lo_t, lo_p) // CUBE_ALIGN) * CUBE_ALIGN
                hi = np.minimum(
                    ((np.maximum(hi_t, hi_p) // CUBE_ALIGN) + 1) * CUBE_ALIGN - 1,
                    np.asarray(dims) - 1,
                )
                motion[lo[0]: hi[0] + 1, lo[1]: hi[1] + 1, lo[2]: hi[2] + 1] = displacement
            motions.append(DenseMotionField(motion.astype(np.float32)))

    return grids, motions, spec


def write_scene(spec: SceneSpec, out_dir) -> dict:
    """Generate and persist a scene; returns a small summary for provenance."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    grids, motions, _ = generate_sequence(spec)
    for t, grid in enumerate(grids):
        write_feature_grid(out_dir / f"frame_{t:04d}.rrfg", grid)
    for t, motion in enumerate(motions, start=1):
        write_motion_field(out_dir / f"motion_{t:04d}.rrfm", motion,
                           spec.bbox_min, spec.bbox_max)
    echo = spec.to_json()
    (out_dir / "scene.json").write_text(json.dumps(echo, indent=2) + "\n")
    return {"frames": len(grids), "motions": len(motions), "dir": str(out_dir)}
