"""Decode sessions: per-quality streams, a bounded LRU of decoded grids,
single-flight P-chain decoding, and a thread-safe stats registry."""

from __future__ import annotations

import threading
from collections import OrderedDict, defaultdict

from ..codec import StageTimer, decode_step
from ..container import StreamReader, gof_of
from ..grids import FeatureGrid


class StatsRegistry:
    """Aggregates stage timings and counters across requests."""

    def __init__(self):
        self._lock = threading.Lock()
        self.reset()

    def reset(self):
        with self._lock:
            self.stage_samples: dict[str, list[float]] = defaultdict(list)
            self.decodes_per_gof: dict[str, int] = defaultdict(int)
            self.decoded_frames = 0
            self.renders = 0
            self.cache_hits = 0
            self.cache_misses = 0
            self.bytes_served = 0

    def merge_timer(self, timer: StageTimer):
        with self._lock:
            for name, samples in timer.samples.items():
                self.stage_samples[name].extend(samples)

    def add_render_sample(self, seconds: float):
        with self._lock:
            self.stage_samples["render"].append(seconds)
            self.renders += 1

    def count_decode(self, quality: int, gof: int, frames: int):
        with self._lock:
            self.decodes_per_gof[f"{quality}/{gof}"] += frames
            self.decoded_frames += frames

    def count_cache(self, hit: bool):
        with self._lock:
            if hit:
                self.cache_hits += 1
            else:
                self.cache_misses += 1

    def count_bytes(self, n: int):
        with self._lock:
            self.bytes_served += n

    def snapshot(self) -> dict:
        with self._lock:
            stages = {}
            for name, samples in self.stage_samples.items():
                ms = [s * 1000.0 for s in samples]
                stages[name] = {
                    "count": len(ms),
                    "total_ms": sum(ms),
                    "mean_ms": sum(ms) / len(ms) if ms else 0.0,
                    "max_ms": max(ms) if ms else 0.0,
                }
            return {
                "stages": stages,
                "decodes_per_gof": dict(self.decodes_per_gof),
                "decoded_frames": self.decoded_frames,
                "renders": self.renders,
                "cache_hits": self.cache_hits,
                "cache_misses": self.cache_misses,
                "bytes_served": self.bytes_served,
            }


class DecodeSession:
    """Serves decoded frames out of an LRU cache keyed by (quality, frame).

    Streams live in memory; every decode chain opens a fresh reader over the
    shared immutable bytes, so concurrent requests never contend on file
    state. Chains for the same (quality, GOF) are serialized behind a
    single-flight lock so neighbors share one P-chain decode.
    """

    def __init__(self, stream_paths: list, cache_capacity: int, stats: StatsRegistry):
        self._paths = list(stream_paths)
        self._bytes: dict[int, bytes] = {}
        self._load_lock = threading.Lock()
        self._cache: OrderedDict[tuple[int, int], FeatureGrid] = OrderedDict()
        self._capacity = max(1, cache_capacity)
        self._cache_lock = threading.Lock()
        self._gof_locks: dict[tuple[int, int], threading.Lock] = {}
        self._gof_locks_guard = threading.Lock()
        self.stats = stats

    @property
    def quality_count(self) -> int:
        return len(self._paths)

    def stream_bytes(self, quality: int) -> bytes:
        with self._load_lock:
            blob = self._bytes.get(quality)
            if blob is None:
                blob = self._paths[quality].read_bytes()
                self._bytes[quality] = blob
            return blob

    def header(self, quality: int):
        return StreamReader(self.stream_bytes(quality)).header

    def open_reader(self, quality: int) -> StreamReader:
        return StreamReader(self.stream_bytes(quality))

    def _cache_get(self, key: tuple[int, int]) -> FeatureGrid | None:
        with self._cache_lock:
            grid = self._cache.get(key)
            if grid is not None:
                self._cache.move_to_end(key)
            return grid

    def _cache_put(self, key: tuple[int, int], grid: FeatureGrid):
        with self._cache_lock:
            self._cache[key] = grid
            self._cache.move_to_end(key)
            while len(self._cache) > self._capacity:
                self._cache.popitem(last=False)

    def cache_entries(self) -> int:
        with self._cache_lock:
            return len(self._cache)

    @property
    def cache_capacity(self) -> int:
        return self._capacity

    def _gof_lock(self, quality: int, gof: int) -> threading.Lock:
        with self._gof_locks_guard:
            return self._gof_locks.setdefault((quality, gof), threading.Lock())

    def get_frame(self, quality: int, frame: int) -> FeatureGrid:
        """Decode (or fetch) one frame, reusing the deepest cached ancestor."""
        header = self.header(quality)
        if not 0 <= frame < header.frame_count:
            raise IndexError(f"frame {frame} out of range [0, {header.frame_count})")
        grid = self._cache_get((quality, frame))
        if grid is not None:
            self.stats.count_cache(True)
            return grid
        self.stats.count_cache(False)

        gof, _ = gof_of(frame, header.gof_length)
        with self._gof_lock(quality, gof):
            grid = self._cache_get((quality, frame))
            if grid is not None:
                return grid
            gof_start = gof * header.gof_length
            start = gof_start
            reference = None
            for t in range(frame - 1, gof_start - 1, -1):
                cached = self._cache_get((quality, t))
                if cached is not None:
                    reference = cached
                    start = t + 1
                    break
            reader = self.open_reader(quality)
            timer = StageTimer()
            decoded = 0
            for t in range(start, frame + 1):
                reference = decode_step(reader, t, reference, timer)
                self._cache_put((quality, t), reference)
                decoded += 1
            self.stats.merge_timer(timer)
            self.stats.count_decode(quality, gof, decoded)
            return reference
