"""Seekable GOF-structured bitstream ("RRFV") plus the multi-quality manifest.

File layout: [header][frame records...][seek index trailer]. The header stores
the trailer offset so single-pass writers only assemble bytes once; every
frame record carries its own byte length so unknown sections can be skipped.
All integers are little-endian, reals are f32.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .entropy import HuffmanTable, parse_table, serialize_table
from .errors import FormatError
from .grids import OccupancyMask, cube_dims
from .transform import CUBE

STREAM_MAGIC = b"RRFV"
INDEX_MAGIC = b"RRFI"
STREAM_VERSION = 1              # pins zigzag order and entropy conventions

FRAME_I = 0
FRAME_P = 1

_HEADER_FIXED = struct.Struct("<4sIQ4I6fIIIffI")
_RECORD_PRELUDE = struct.Struct("<BI")


def gof_of(t: int, gof_length: int) -> tuple[int, int]:
    """Map a frame index to (GOF index, offset within the GOF)."""
    if t < 0:
        raise ValueError("frame index must be >= 0")
    if gof_length < 1:
        raise ValueError("GOF length must be >= 1")
    return t // gof_length, t % gof_length


@dataclass
class StreamHeader:
    dims: tuple[int, int, int]
    channels: int
    bbox_min: np.ndarray
    bbox_max: np.ndarray
    gof_length: int
    kernel: int
    frame_count: int
    frame_rate: float
    default_sq: float
    q_matrix: np.ndarray                    # (8, 8, 8)
    decoder_mode: str = "direct"            # "direct" | "mlp"
    decoder_weights: bytes = b""
    flags: int = 0

    def __post_init__(self):
        if self.gof_length < 1:
            raise ValueError("GOF length must be >= 1")
        if self.decoder_mode not in ("direct", "mlp"):
            raise ValueError(f"unknown decoder mode {self.decoder_mode!r}")
        self.q_matrix = np.asarray(self.q_matrix, dtype=np.float64)

    @property
    def gof_count(self) -> int:
        return -(-self.frame_count // self.gof_length)


@dataclass
class EntropyPayload:
    """A Huffman-coded bit string and the symbol count needed to decode it."""

    table: HuffmanTable | None
    count: int
    bit_count: int
    data: bytes


@dataclass
class FrameRecord:
    frame_type: int                         # FRAME_I | FRAME_P
    mask: OccupancyMask
    pca: np.ndarray | None = None           # (n, q) float32, P-frames only
    motion: EntropyPayload | None = None    # P-frames only
    dc_table: HuffmanTable | None = None
    ac_table: HuffmanTable | None = None
    channel_payloads: list[tuple[int, bytes]] = field(default_factory=list)
    sizes: dict[str, int] = field(default_factory=dict)
    total_bytes: int = 0


@dataclass
class SeekIndex:
    gof_offsets: list[int]
    frame_offsets: list[int]

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.gof_offsets, self.gof_offsets[1:])):
            raise FormatError("seek index offsets must be strictly increasing")


def serialize_header(header: StreamHeader, index_offset: int) -> bytes:
    fixed = _HEADER_FIXED.pack(
        STREAM_MAGIC,
        STREAM_VERSION,
        index_offset,
        *header.dims,
        header.channels,
        *np.asarray(header.bbox_min, np.float64),
        *np.asarray(header.bbox_max, np.float64),
        header.gof_length,
        header.kernel,
        header.frame_count,
        header.frame_rate,
        header.default_sq,
        header.flags,
    )
    q = np.ascontiguousarray(header.q_matrix, dtype="<f4").tobytes()
    mode = b"\x01" if header.decoder_mode == "mlp" else b"\x00"
    return fixed + q + mode + struct.pack("<I", len(header.decoder_weights)) + header.decoder_weights


def header_size(header: StreamHeader) -> int:
    return _HEADER_FIXED.size + CUBE ** 3 * 4 + 5 + len(header.decoder_weights)


def parse_header(buf: bytes) -> tuple[StreamHeader, int]:
    """Parse a header from the start of ``buf``; returns (header, index_offset)."""
    if len(buf) < _HEADER_FIXED.size:
        raise FormatError("truncated stream header")
    (magic, version, index_offset, nx, ny, nz, c,
     bx0, by0, bz0, bx1, by1, bz1,
     gof_length, kernel, frame_count, frame_rate, default_sq, flags) = _HEADER_FIXED.unpack_from(buf, 0)
    if magic != STREAM_MAGIC:
        raise FormatError(f"bad stream magic {magic!r}")
    if version != STREAM_VERSION:
        raise FormatError(f"unsupported stream version {version}")
    off = _HEADER_FIXED.size
    qn = CUBE ** 3
    if len(buf) < off + qn * 4 + 5:
        raise FormatError("truncated stream header")
    q_matrix = np.frombuffer(buf, dtype="<f4", count=qn, offset=off).reshape(CUBE, CUBE, CUBE)
    off += qn * 4
    mode = "mlp" if buf[off] else "direct"
    off += 1
    (wlen,) = struct.unpack_from("<I", buf, off)
    off += 4
    if len(buf) < off + wlen:
        raise FormatError("truncated decoder weights")
    weights = bytes(buf[off: off + wlen])
    off += wlen
    header = StreamHeader(
        dims=(nx, ny, nz), channels=c,
        bbox_min=np.array([bx0, by0, bz0], np.float32),
        bbox_max=np.array([bx1, by1, bz1], np.float32),
        gof_length=gof_length, kernel=kernel,
        frame_count=frame_count, frame_rate=frame_rate,
        default_sq=default_sq, q_matrix=q_matrix.astype(np.float64),
        decoder_mode=mode, decoder_weights=weights, flags=flags,
    )
    return header, index_offset


def _serialize_payload(payload: EntropyPayload) -> bytes:
    table = serialize_table(payload.table)
    return (
        struct.pack("<III", len(table), payload.count, payload.bit_count)
        + table
        + struct.pack("<I", len(payload.data))
        + payload.data
    )


def _parse_payload(buf: bytes, off: int) -> tuple[EntropyPayload, int]:
    table_len, count, bit_count = struct.unpack_from("<III", buf, off)
    off += 12
    table, table_end = parse_table(buf, off)
    if table_end - off != table_len:
        raise FormatError("Huffman table length mismatch")
    off = table_end
    (data_len,) = struct.unpack_from("<I", buf, off)
    off += 4
    data = bytes(buf[off: off + data_len])
    if len(data) != data_len:
        raise FormatError("truncated entropy payload")
    return EntropyPayload(table, count, bit_count, data), off + data_len


def serialize_frame_record(record: FrameRecord) -> bytes:
    """Flatten one frame record; also fills record.sizes and record.total_bytes."""
    parts: list[bytes] = []
    mask_bytes = np.packbits(record.mask.occupied.reshape(-1)).tobytes()
    parts.append(struct.pack("<I", len(mask_bytes)) + mask_bytes)
    other = 0
    pca_size = motion_size = 0
    if record.frame_type == FRAME_P:
        if record.pca is None or record.motion is None:
            raise FormatError("P-frame records need PCA basis and motion payload")
        v = np.ascontiguousarray(record.pca, dtype="<f4")
        pca_part = struct.pack("<HH", *v.shape) + v.tobytes()
        parts.append(pca_part)
        pca_size = len(pca_part)
        motion_part = _serialize_payload(record.motion)
        parts.append(motion_part)
        motion_size = len(motion_part)

    dc = serialize_table(record.dc_table)
    ac = serialize_table(record.ac_table)
    chan_parts = [struct.pack("<H", len(record.channel_payloads)), dc, ac]
    for bit_count, data in record.channel_payloads:
        chan_parts.append(struct.pack("<II", bit_count, len(data)) + data)
    residual_part = b"".join(chan_parts)
    parts.append(residual_part)

    body = b"".join(parts)
    total = _RECORD_PRELUDE.size + len(body)
    other = total - pca_size - motion_size - len(residual_part)
    record.sizes = {
        "residual": len(residual_part),
        "motion": motion_size,
        "pca": pca_size,
        "other": other,
    }
    record.total_bytes = total
    return _RECORD_PRELUDE.pack(record.frame_type, total) + body


def parse_frame_record(buf: bytes, dims: tuple[int, int, int]) -> FrameRecord:
    """Parse one complete frame record (prelude included) for the given grid dims."""
    if len(buf) < _RECORD_PRELUDE.size:
        raise FormatError("truncated frame record")
    frame_type, total = _RECORD_PRELUDE.unpack_from(buf, 0)
    if frame_type not in (FRAME_I, FRAME_P):
        raise FormatError(f"unknown frame type {frame_type}")
    if total != len(buf):
        raise FormatError("frame record length mismatch")
    off = _RECORD_PRELUDE.size

    (mask_len,) = struct.unpack_from("<I", buf, off)
    off += 4
    cdims = cube_dims(dims, CUBE)
    n_cubes = cdims[0] * cdims[1] * cdims[2]
    if mask_len != -(-n_cubes // 8):
        raise FormatError("occupancy mask size mismatch")
    bits = np.unpackbits(np.frombuffer(buf, np.uint8, mask_len, off), count=n_cubes)
    mask = OccupancyMask(bits.reshape(cdims).astype(bool), CUBE)
    off += mask_len

    pca = None
    motion = None
    pca_size = motion_size = 0
    if frame_type == FRAME_P:
        n, q = struct.unpack_from("<HH", buf, off)
        pca = np.frombuffer(buf, dtype="<f4", count=n * q, offset=off + 4).reshape(n, q)
        pca_size = 4 + n * q * 4
        off += pca_size
        motion_start = off
        motion, off = _parse_payload(buf, off)
        motion_size = off - motion_start

    residual_start = off
    (n_channels,) = struct.unpack_from("<H", buf, off)
    off += 2
    dc_table, off = parse_table(buf, off)
    ac_table, off = parse_table(buf, off)
    payloads = []
    for _ in range(n_channels):
        bit_count, data_len = struct.unpack_from("<II", buf, off)
        off += 8
        payloads.append((bit_count, bytes(buf[off: off + data_len])))
        off += data_len
    if off != len(buf):
        raise FormatError("frame record has trailing bytes")

    record = FrameRecord(
        frame_type=frame_type, mask=mask, pca=pca, motion=motion,
        dc_table=dc_table, ac_table=ac_table, channel_payloads=payloads,
    )
    record.sizes = {
        "residual": off - residual_start,
        "motion": motion_size,
        "pca": pca_size,
        "other": total - (off - residual_start) - motion_size - pca_size,
    }
    record.total_bytes = total
    return record


def write_stream(header: StreamHeader, records: list[FrameRecord]) -> bytes:
    """Assemble a complete stream; records must follow the GOF I/P pattern."""
    if len(records) != header.frame_count:
        raise FormatError(f"header says {header.frame_count} frames, got {len(records)}")
    for t, record in enumerate(records):
        expected = FRAME_I if t % header.gof_length == 0 else FRAME_P
        if record.frame_type != expected:
            kind = "I" if expected == FRAME_I else "P"
            raise FormatError(f"frame {t} must be a {kind}-frame")
    blobs = [serialize_frame_record(r) for r in records]
    base = header_size(header)
    frame_offsets = []
    pos = base
    for blob in blobs:
        frame_offsets.append(pos)
        pos += len(blob)
    index_offset = pos
    gof_offsets = frame_offsets[:: header.gof_length]
    trailer = [INDEX_MAGIC, struct.pack("<I", len(gof_offsets))]
    trailer.append(np.asarray(gof_offsets, dtype="<u8").tobytes())
    trailer.append(struct.pack("<I", len(frame_offsets)))
    trailer.append(np.asarray(frame_offsets, dtype="<u8").tobytes())
    return serialize_header(header, index_offset) + b"".join(blobs) + b"".join(trailer)


class StreamReader:
    """Random access over a stream file; header and seek index load at open.

    ``read_frame_record(t)`` touches only that frame's byte range, so decoding
    any frame after open never reads bytes before its GOF offset.
    """

    def __init__(self, source):
        if isinstance(source, (bytes, bytearray)):
            self._fp = io.BytesIO(bytes(source))
            self._size = len(source)
        elif isinstance(source, (str, Path)):
            self._fp = open(source, "rb")
            self._fp.seek(0, io.SEEK_END)
            self._size = self._fp.tell()
        else:
            self._fp = source
            self._fp.seek(0, io.SEEK_END)
            self._size = self._fp.tell()

        self._fp.seek(0)
        fixed_len = _HEADER_FIXED.size + CUBE ** 3 * 4 + 5
        head = self._fp.read(fixed_len)
        if len(head) < fixed_len:
            raise FormatError("truncated stream header")
        (wlen,) = struct.unpack_from("<I", head, fixed_len - 4)
        head += self._fp.read(wlen)
        self.header, self._index_offset = parse_header(head)
        self.index = self._read_index()

    def close(self):
        self._fp.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _read_index(self) -> SeekIndex:
        if self._index_offset >= self._size:
            raise FormatError("seek index offset points past end of stream")
        self._fp.seek(self._index_offset)
        blob = self._fp.read(self._size - self._index_offset)
        if blob[:4] != INDEX_MAGIC:
            raise FormatError("bad seek index magic")
        off = 4
        (n_gofs,) = struct.unpack_from("<I", blob, off)
        off += 4
        gofs = np.frombuffer(blob, dtype="<u8", count=n_gofs, offset=off)
        off += 8 * n_gofs
        (n_frames,) = struct.unpack_from("<I", blob, off)
        off += 4
        frames = np.frombuffer(blob, dtype="<u8", count=n_frames, offset=off)
        if n_frames != self.header.frame_count:
            raise FormatError("seek index frame count mismatch")
        return SeekIndex([int(x) for x in gofs], [int(x) for x in frames])

    def _frame_byte_range(self, t: int) -> tuple[int, int]:
        if not 0 <= t < self.header.frame_count:
            raise IndexError(f"frame {t} out of range [0, {self.header.frame_count})")
        start = self.index.frame_offsets[t]
        end = (
            self.index.frame_offsets[t + 1]
            if t + 1 < self.header.frame_count
            else self._index_offset
        )
        return start, end

    def read_frame_record(self, t: int) -> FrameRecord:
        start, end = self._frame_byte_range(t)
        self._fp.seek(start)
        blob = self._fp.read(end - start)
        if len(blob) != end - start:
            raise FormatError(f"frame {t}: truncated record")
        return parse_frame_record(blob, self.header.dims)

    def gof_byte_range(self, g: int) -> tuple[int, int]:
        """Byte range covering every frame record of GOF ``g``."""
        if not 0 <= g < len(self.index.gof_offsets):
            raise IndexError(f"GOF {g} out of range [0, {len(self.index.gof_offsets)})")
        start = self.index.gof_offsets[g]
        end = (
            self.index.gof_offsets[g + 1]
            if g + 1 < len(self.index.gof_offsets)
            else self._index_offset
        )
        return start, end

    def read_byte_range(self, start: int, end: int) -> bytes:
        self._fp.seek(start)
        return self._fp.read(end - start)


def build_manifest(frame_count: int, gof_length: int, frame_rate: float, qualities: list[dict]) -> dict:
    """Manifest document listing one independently coded stream per quality level."""
    return {
        "frame_count": frame_count,
        "gof_length": gof_length,
        "frame_rate": frame_rate,
        "qualities": qualities,
    }


def write_manifest(path, manifest: dict) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2) + "\n")


def read_manifest(path) -> dict:
    try:
        manifest = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read manifest {path}: {exc}") from exc
    for key in ("frame_count", "gof_length", "frame_rate", "qualities"):
        if key not in manifest:
            raise FormatError(f"manifest {path} is missing {key!r}")
    if not manifest["qualities"]:
        raise FormatError(f"manifest {path} lists no quality levels")
    return manifest
