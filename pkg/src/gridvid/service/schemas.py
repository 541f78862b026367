"""Request/response models for the streaming service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class QualityLevel(BaseModel):
    index: int
    sq: float
    avg_bitrate_kbps: float
    path: str


class ManifestResponse(BaseModel):
    frame_count: int
    gof_length: int
    frame_rate: float
    qualities: list[QualityLevel]


class StageStats(BaseModel):
    count: int = 0
    total_ms: float = 0.0
    mean_ms: float = 0.0
    max_ms: float = 0.0


class CacheStats(BaseModel):
    hits: int = 0
    misses: int = 0
    entries: int = 0
    capacity: int = 0


class StatsResponse(BaseModel):
    stages: dict[str, StageStats] = Field(default_factory=dict)
    cache: CacheStats = Field(default_factory=CacheStats)
    decoded_frames: int = 0
    decodes_per_gof: dict[str, int] = Field(default_factory=dict)
    renders: int = 0
    bytes_served: int = 0
