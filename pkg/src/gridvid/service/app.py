"""FastAPI application serving manifests, GOF byte ranges, rendered frames and stats."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from ..container import read_manifest
from ..render import RenderConfig, image_to_png, orbit_view, parse_decoder, render_image
from .schemas import CacheStats, ManifestResponse, StageStats, StatsResponse
from .session import DecodeSession, StatsRegistry


@dataclass
class ServiceSettings:
    manifest_path: str | Path
    max_size: int = 1024
    default_size: int = 256
    samples: int = 96
    fov_deg: float = 45.0
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)
    density_floor: float = 0.05
    density_shift: float = 0.0
    cache_capacity: int = 48
    allowed_origins: tuple[str, ...] = ("*",)
    render_config_overrides: dict = field(default_factory=dict)

    def render_config(self, mode: str, near: float, far: float) -> RenderConfig:
        return RenderConfig(
            samples=self.samples,
            near=near,
            far=far,
            background=self.background,
            mode=mode,
            density_shift=self.density_shift,
            density_floor=self.density_floor,
            **self.render_config_overrides,
        )


def default_radius(header) -> float:
    half_diag = float(np.linalg.norm(header.bbox_max - header.bbox_min)) / 2.0 or 1.0
    return 2.5 * half_diag


def create_app(settings: ServiceSettings) -> FastAPI:
    manifest = read_manifest(settings.manifest_path)
    base_dir = Path(settings.manifest_path).parent
    stream_paths = [base_dir / level["path"] for level in manifest["qualities"]]

    stats = StatsRegistry()
    session = DecodeSession(stream_paths, settings.cache_capacity, stats)

    app = FastAPI(title="gridvid stream service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(settings.allowed_origins),
        allow_methods=["GET"],
        allow_headers=["*"],
    )
    app.state.session = session
    app.state.stats = stats
    app.state.settings = settings

    @app.exception_handler(RequestValidationError)
    async def malformed_params(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": str(exc.errors())})

    def check_quality(quality: int) -> None:
        if not 0 <= quality < session.quality_count:
            raise HTTPException(404, f"unknown quality level {quality}")

    def load_header(quality: int):
        try:
            return session.header(quality)
        except OSError as exc:
            raise HTTPException(500, f"stream unreadable: {exc}") from exc

    @app.get("/manifest", response_model=ManifestResponse)
    def get_manifest():
        missing = [str(p) for p in stream_paths if not p.is_file()]
        if missing:
            raise HTTPException(500, f"manifest references missing streams: {missing}")
        try:
            qualities = [
                {
                    "index": i,
                    "sq": level["sq"],
                    "avg_bitrate_kbps": level["avg_bitrate_kbps"],
                    "path": level["path"],
                }
                for i, level in enumerate(manifest["qualities"])
            ]
            return ManifestResponse(
                frame_count=manifest["frame_count"],
                gof_length=manifest["gof_length"],
                frame_rate=manifest["frame_rate"],
                qualities=qualities,
            )
        except (KeyError, TypeError) as exc:
            raise HTTPException(500, f"manifest unreadable: {exc}") from exc

    @app.get("/gof/{quality}/{index}")
    def get_gof(quality: int, index: int):
        check_quality(quality)
        load_header(quality)
        reader = session.open_reader(quality)
        try:
            start, end = reader.gof_byte_range(index)
        except IndexError as exc:
            raise HTTPException(404, str(exc)) from exc
        blob = reader.read_byte_range(start, end)
        stats.count_bytes(len(blob))
        return Response(
            content=blob,
            media_type="application/octet-stream",
            headers={"Content-Length": str(len(blob))},
        )

    @app.get("/render")
    def get_render(
        quality: int = 0,
        frame: int = 0,
        yaw: float = 0.0,
        pitch: float = 0.0,
        radius: float | None = None,
        w: int | None = Query(None, ge=1),
        h: int | None = Query(None, ge=1),
    ):
        check_quality(quality)
        header = load_header(quality)
        if not 0 <= frame < header.frame_count:
            raise HTTPException(404, f"frame {frame} out of range [0, {header.frame_count})")
        width = settings.default_size if w is None else w
        height = settings.default_size if h is None else h
        if width > settings.max_size or height > settings.max_size:
            raise HTTPException(400, f"image size capped at {settings.max_size}")

        grid = session.get_frame(quality, frame)
        camera, near, far = orbit_view(
            header.bbox_min, header.bbox_max, yaw, pitch,
            radius if radius is not None else default_radius(header),
            width, height, settings.fov_deg,
        )
        cfg = settings.render_config(header.decoder_mode, near, far)
        decoder = parse_decoder(header.decoder_weights) if header.decoder_mode == "mlp" else None
        start = time.perf_counter()
        image = render_image(grid, camera, cfg, decoder)
        stats.add_render_sample(time.perf_counter() - start)
        png = image_to_png(image)
        stats.count_bytes(len(png))
        return Response(content=png, media_type="image/png")

    @app.get("/stats", response_model=StatsResponse)
    def get_stats():
        snap = stats.snapshot()
        return StatsResponse(
            stages={name: StageStats(**agg) for name, agg in snap["stages"].items()},
            cache=CacheStats(
                hits=snap["cache_hits"],
                misses=snap["cache_misses"],
                entries=session.cache_entries(),
                capacity=session.cache_capacity,
            ),
            decoded_frames=snap["decoded_frames"],
            decodes_per_gof=snap["decodes_per_gof"],
            renders=snap["renders"],
            bytes_served=snap["bytes_served"],
        )

    return app
