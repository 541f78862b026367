"""CPU volume renderer for feature grids.

Rays march with uniform steps from near to far; densities interpolate first
and activate afterwards (softplus). Color comes either straight from feature
channels 1..3 through a sigmoid ("direct") or from a small MLP fed with the
color features plus a sin/cos direction encoding ("mlp").

Exactly-zero interpolated raw density marks empty space and contributes
nothing. ``density_floor`` widens that test so quantization noise in coded
frames cannot turn empty space into fog.
"""

from __future__ import annotations

import io
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError, ShapeError
from .grids import FeatureGrid, trilinear_sample

WEIGHTS_MAGIC = b"RRFW"
DIRECTION_FREQS = (1.0, 2.0, 4.0, 8.0)
MLP_HIDDEN = 128


@dataclass
class Camera:
    """Pinhole camera: position, look-at target, up hint, vertical FOV."""

    position: np.ndarray
    target: np.ndarray
    up: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    fov_deg: float = 45.0
    width: int = 256
    height: int = 256

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        self.target = np.asarray(self.target, dtype=np.float64).reshape(3)
        self.up = np.asarray(self.up, dtype=np.float64).reshape(3)
        if not 0.0 < self.fov_deg < 180.0:
            raise ValueError(f"vertical FOV must be in (0, 180), got {self.fov_deg}")
        if np.allclose(self.position, self.target):
            raise ValueError("camera position and target coincide")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be positive")


@dataclass
class RenderConfig:
    samples: int = 128
    near: float = 0.1
    far: float = 4.0
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)
    mode: str = "direct"                    # "direct" | "mlp"
    density_shift: float = 0.0
    density_floor: float = 0.0
    chunk: int = 4096

    def __post_init__(self):
        if self.samples < 2:
            raise ValueError("need at least 2 samples per ray")
        if not self.near < self.far:
            raise ValueError("near must be < far")
        if self.mode not in ("direct", "mlp"):
            raise ValueError(f"unknown decoder mode {self.mode!r}")


@dataclass
class DecoderMLP:
    """features+direction -> 128 -> 128 -> RGB, ReLU hidden, sigmoid output."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    def __post_init__(self):
        for name in ("w1", "b1", "w2", "b2", "w3", "b3"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float32))
        h = MLP_HIDDEN
        if (self.w1.shape[1] != h or self.b1.shape != (h,)
                or self.w2.shape != (h, h) or self.b2.shape != (h,)
                or self.w3.shape != (h, 3) or self.b3.shape != (3,)):
            raise ShapeError("decoder MLP layer shapes are inconsistent")

    @property
    def feature_dim(self) -> int:
        return self.w1.shape[0] - direction_encoding_dim()

    @classmethod
    def random(cls, feature_dim: int, seed: int = 0, scale: float = 0.1) -> "DecoderMLP":
        rng = np.random.default_rng(seed)
        d_in = feature_dim + direction_encoding_dim()
        return cls(
            w1=rng.normal(0, scale, (d_in, MLP_HIDDEN)),
            b1=rng.normal(0, scale, MLP_HIDDEN),
            w2=rng.normal(0, scale, (MLP_HIDDEN, MLP_HIDDEN)),
            b2=rng.normal(0, scale, MLP_HIDDEN),
            w3=rng.normal(0, scale, (MLP_HIDDEN, 3)),
            b3=rng.normal(0, scale, 3),
        )

    def forward(self, features: np.ndarray, directions: np.ndarray) -> np.ndarray:
        x = np.concatenate([features, encode_direction(directions)], axis=-1).astype(np.float32)
        h = np.maximum(x @ self.w1 + self.b1, 0.0)
        h = np.maximum(h @ self.w2 + self.b2, 0.0)
        return sigmoid(h @ self.w3 + self.b3)


def direction_encoding_dim() -> int:
    return 3 + 3 * 2 * len(DIRECTION_FREQS)


def encode_direction(directions: np.ndarray) -> np.ndarray:
    """Raw direction plus sin/cos at fixed frequencies."""
    d = np.asarray(directions, dtype=np.float32)
    parts = [d]
    for freq in DIRECTION_FREQS:
        parts.append(np.sin(freq * d))
        parts.append(np.cos(freq * d))
    return np.concatenate(parts, axis=-1)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def density_activation(raw, shift: float = 0.0):
    """Softplus of the shifted raw density: log(1 + exp(raw + shift))."""
    return np.logaddexp(0.0, np.asarray(raw, dtype=np.float64) + shift)


def decode_color(features: np.ndarray, directions: np.ndarray,
                 decoder: DecoderMLP | None = None, mode: str = "direct") -> np.ndarray:
    """Color features (C-1 per sample) plus unit view direction -> RGB in [0,1]."""
    if mode == "direct":
        if features.shape[-1] < 3:
            raise ShapeError("direct mode needs at least 3 color feature channels")
        return sigmoid(np.asarray(features[..., :3], dtype=np.float64))
    if decoder is None:
        raise ValueError("mlp mode needs decoder weights")
    if features.shape[-1] != decoder.feature_dim:
        raise ShapeError(
            f"decoder expects {decoder.feature_dim} feature channels, got {features.shape[-1]}"
        )
    return decoder.forward(features, directions)


def camera_rays(cam: Camera) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel ray origins and unit directions, row-major, pixel centers."""
    forward = cam.target - cam.position
    forward = forward / np.linalg.norm(forward)
    right = np.cross(forward, cam.up)
    norm = np.linalg.norm(right)
    if norm < 1e-9:
        raise ValueError("camera up vector is parallel to the view direction")
    right = right / norm
    down = np.cross(forward, right)

    tan_half = np.tan(np.radians(cam.fov_deg) / 2.0)
    ys = (np.arange(cam.height) + 0.5) / cam.height * 2.0 - 1.0
    xs = (np.arange(cam.width) + 0.5) / cam.width * 2.0 - 1.0
    aspect = cam.width / cam.height
    px = xs[None, :, None] * (tan_half * aspect) * right
    py = ys[:, None, None] * tan_half * down
    dirs = forward + px + py
    dirs = dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)
    origins = np.broadcast_to(cam.position, dirs.shape)
    return origins.reshape(-1, 3), dirs.reshape(-1, 3)


def _march(grid: FeatureGrid, origins: np.ndarray, dirs: np.ndarray,
           cfg: RenderConfig, decoder: DecoderMLP | None) -> np.ndarray:
    n_rays = origins.shape[0]
    samples = cfg.samples
    step = (cfg.far - cfg.near) / samples
    ts = cfg.near + (np.arange(samples) + 0.5) * step
    pos = origins[:, None, :] + dirs[:, None, :] * ts[None, :, None]

    extent = (grid.bbox_max - grid.bbox_min).astype(np.float64)
    extent = np.where(extent == 0, 1.0, extent)
    dims = np.array(grid.dims, dtype=np.float64)
    coords = (pos - grid.bbox_min) / extent * (dims - 1.0)
    inside = np.all((coords >= 0.0) & (coords <= dims - 1.0), axis=-1)

    feats = trilinear_sample(grid.data, coords.reshape(-1, 3), oob="clamp")
    feats = feats.reshape(n_rays, samples, grid.channels)
    raw = feats[..., 0]

    occupied = inside & (raw > cfg.density_floor)
    sigma = np.zeros_like(raw)
    sigma[occupied] = density_activation(raw[occupied], cfg.density_shift)

    alpha = 1.0 - np.exp(-sigma * step)
    trans = np.cumprod(1.0 - alpha, axis=1)
    trans = np.concatenate([np.ones((n_rays, 1)), trans[:, :-1]], axis=1)
    weights = trans * alpha

    rgb = np.zeros((n_rays, samples, 3))
    active = weights > 0.0
    if np.any(active):
        ray_idx = np.nonzero(active)[0]
        rgb[active] = decode_color(
            feats[active][:, 1:], dirs[ray_idx], decoder, cfg.mode
        )
    pixels = np.sum(weights[..., None] * rgb, axis=1)
    residual_t = trans[:, -1] * (1.0 - alpha[:, -1])
    pixels += residual_t[:, None] * np.asarray(cfg.background, dtype=np.float64)
    return pixels


def render_image(grid: FeatureGrid, camera: Camera, cfg: RenderConfig,
                 decoder: DecoderMLP | None = None, threads: int = 1) -> np.ndarray:
    """Render an (H, W, 3) float32 image in [0, 1]."""
    if cfg.mode == "mlp" and decoder is None:
        raise ValueError("mlp mode needs decoder weights")
    origins, dirs = camera_rays(camera)
    n_rays = origins.shape[0]
    chunks = [(s, min(s + cfg.chunk, n_rays)) for s in range(0, n_rays, cfg.chunk)]
    out = np.empty((n_rays, 3))

    def run(bounds):
        s, e = bounds
        out[s:e] = _march(grid, origins[s:e], dirs[s:e], cfg, decoder)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, chunks))
    else:
        for bounds in chunks:
            run(bounds)
    img = np.clip(out, 0.0, 1.0).reshape(camera.height, camera.width, 3)
    return img.astype(np.float32)


def orbit_view(bbox_min, bbox_max, yaw_deg: float, pitch_deg: float, radius: float,
               width: int, height: int, fov_deg: float = 45.0) -> tuple[Camera, float, float]:
    """Camera orbiting the bbox center, plus near/far spanning the bbox.

    Shared by the streaming service and its clients so identical orbit
    parameters always produce identical renders.
    """
    bmin = np.asarray(bbox_min, dtype=np.float64)
    bmax = np.asarray(bbox_max, dtype=np.float64)
    center = (bmin + bmax) / 2.0
    yaw = np.radians(yaw_deg)
    pitch = np.radians(np.clip(pitch_deg, -89.0, 89.0))
    offset = np.array([
        np.cos(pitch) * np.sin(yaw),
        np.sin(pitch),
        np.cos(pitch) * np.cos(yaw),
    ])
    cam = Camera(center + radius * offset, center, np.array([0.0, 1.0, 0.0]),
                 fov_deg, width, height)
    half_diag = float(np.linalg.norm(bmax - bmin)) / 2.0 or 1.0
    near = max(radius - 1.05 * half_diag, 0.05 * radius)
    far = radius + 1.05 * half_diag
    return cam, near, far


def image_to_png(img: np.ndarray) -> bytes:
    """8-bit RGB PNG bytes; deterministic for identical pixel data."""
    u8 = np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(u8, mode="RGB").save(buf, format="PNG", compress_level=6)
    return buf.getvalue()


def write_raw_rgb(path, img: np.ndarray) -> None:
    """Raw f32 dump (u32 height, u32 width, then h*w*3 little-endian floats)."""
    img = np.asarray(img, dtype="<f4")
    with open(path, "wb") as fp:
        fp.write(struct.pack("<II", img.shape[0], img.shape[1]))
        fp.write(np.ascontiguousarray(img).tobytes())


def read_raw_rgb(path) -> np.ndarray:
    blob = open(path, "rb").read()
    h, w = struct.unpack_from("<II", blob, 0)
    return np.frombuffer(blob, dtype="<f4", count=h * w * 3, offset=8).reshape(h, w, 3).copy()


def save_decoder_weights(path, decoder: DecoderMLP) -> None:
    Path(path).write_bytes(serialize_decoder(decoder))


def load_decoder_weights(path) -> DecoderMLP:
    return parse_decoder(Path(path).read_bytes())


def serialize_decoder(decoder: DecoderMLP) -> bytes:
    """Little-endian f32 arrays, each preceded by a shape header."""
    parts = [WEIGHTS_MAGIC, struct.pack("<I", 6)]
    for arr in (decoder.w1, decoder.b1, decoder.w2, decoder.b2, decoder.w3, decoder.b3):
        arr = np.ascontiguousarray(arr, dtype="<f4")
        parts.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def parse_decoder(blob: bytes) -> DecoderMLP:
    if blob[:4] != WEIGHTS_MAGIC:
        raise FormatError("bad decoder weights magic")
    (count,) = struct.unpack_from("<I", blob, 4)
    if count != 6:
        raise FormatError(f"expected 6 weight arrays, got {count}")
    off = 8
    arrays = []
    for _ in range(count):
        (ndim,) = struct.unpack_from("<I", blob, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}I", blob, off)
        off += 4 * ndim
        n = int(np.prod(shape))
        arrays.append(np.frombuffer(blob, dtype="<f4", count=n, offset=off).reshape(shape))
        off += 4 * n
    return DecoderMLP(*arrays)
