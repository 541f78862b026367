"""gridvid: codec, container, renderer and streaming service for volumetric feature-grid video."""

from .codec import EncodeConfig, StageTimer, decode_frame, encode_sequence, psnr
from .container import StreamReader, gof_of
from .errors import EncodeError, FormatError, GridVidError, ShapeError
from .grids import (
    DenseMotionField,
    FeatureGrid,
    MotionGrid,
    OccupancyMask,
    ResidualGrid,
    apply_residual,
    compute_residual,
    motion_pool,
    occupancy_from_grid,
    trilinear_sample,
    warp_features,
)
from .render import Camera, DecoderMLP, RenderConfig, render_image
from .synth import Blob, SceneSpec, generate_sequence

__version__ = "0.1.0"

__all__ = [
    "Blob",
    "Camera",
    "DecoderMLP",
    "DenseMotionField",
    "EncodeConfig",
    "EncodeError",
    "FeatureGrid",
    "FormatError",
    "GridVidError",
    "MotionGrid",
    "OccupancyMask",
    "RenderConfig",
    "ResidualGrid",
    "SceneSpec",
    "ShapeError",
    "StageTimer",
    "StreamReader",
    "apply_residual",
    "compute_residual",
    "decode_frame",
    "encode_sequence",
    "generate_sequence",
    "gof_of",
    "motion_pool",
    "occupancy_from_grid",
    "psnr",
    "render_image",
    "trilinear_sample",
    "warp_features",
]
