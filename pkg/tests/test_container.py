import io

import numpy as np
import pytest

from gridvid.codec import EncodeConfig, decode_frame, encode_sequence
from gridvid.container import (
    FRAME_I,
    FRAME_P,
    StreamReader,
    build_manifest,
    gof_of,
    parse_header,
    read_manifest,
    serialize_header,
    write_manifest,
    write_stream,
)
from gridvid.errors import FormatError
from gridvid.synth import generate_sequence
from tests.conftest import small_scene


class TracingFile(io.BytesIO):
    """BytesIO that records every (offset, length) read."""

    def __init__(self, data):
        super().__init__(data)
        self.reads = []
        self.tracing = False

    def read(self, n=-1):
        if self.tracing:
            self.reads.append((self.tell(), n))
        return super().read(n)


@pytest.fixture(scope="module")
def stream_40():
    spec = small_scene(frames=40, n=32, texture=0.3)
    grids, motions, _ = generate_sequence(spec)
    cfg = EncodeConfig(sq_ladder=(0.1,), gof_length=20)
    blob = encode_sequence(grids, motions, cfg)
    return grids, blob


def test_gof_of_examples():
    assert gof_of(0, 20) == (0, 0)
    assert gof_of(20, 20) == (1, 0)
    assert gof_of(37, 20) == (1, 17)
    with pytest.raises(ValueError):
        gof_of(-1, 20)
    with pytest.raises(ValueError):
        gof_of(0, 0)


def test_header_round_trip(stream_40):
    _, blob = stream_40
    reader = StreamReader(blob)
    h = reader.header
    again, _ = parse_header(serialize_header(h, 1234))
    assert again.dims == h.dims
    assert again.channels == h.channels
    assert np.allclose(again.bbox_min, h.bbox_min)
    assert np.allclose(again.bbox_max, h.bbox_max)
    assert again.gof_length == h.gof_length
    assert again.kernel == h.kernel
    assert again.frame_count == h.frame_count
    assert again.frame_rate == h.frame_rate
    assert again.default_sq == h.default_sq
    assert np.array_equal(again.q_matrix, h.q_matrix)
    assert again.decoder_mode == h.decoder_mode


def test_gof_structure_40_frames(stream_40):
    _, blob = stream_40
    reader = StreamReader(blob)
    assert reader.header.gof_count == 2
    assert len(reader.index.gof_offsets) == 2
    assert reader.read_frame_record(0).frame_type == FRAME_I
    assert reader.read_frame_record(20).frame_type == FRAME_I
    for t in (1, 5, 19, 21, 39):
        assert reader.read_frame_record(t).frame_type == FRAME_P


def test_frame_record_round_trip(stream_40):
    _, blob = stream_40
    reader = StreamReader(blob)
    rec = reader.read_frame_record(3)
    assert rec.total_bytes > 0
    assert set(rec.sizes) == {"residual", "motion", "pca", "other"}
    assert sum(rec.sizes.values()) == rec.total_bytes


def test_random_access_reads_only_frame_range(stream_40):
    _, blob = stream_40
    fp = TracingFile(blob)
    reader = StreamReader(fp)
    gof1_offset = reader.index.gof_offsets[1]
    fp.tracing = True
    reader.read_frame_record(37)
    assert fp.reads, "expected instrumented reads"
    for offset, _ in fp.reads:
        assert offset >= gof1_offset


def test_decode_never_reads_before_gof_offset(stream_40):
    _, blob = stream_40
    fp = TracingFile(blob)
    reader = StreamReader(fp)
    gof1_offset = reader.index.gof_offsets[1]
    fp.tracing = True
    decode_frame(reader, 37)
    for offset, _ in fp.reads:
        assert offset >= gof1_offset


def test_stream_bytes_deterministic(stream_40):
    grids, blob = stream_40
    spec = small_scene(frames=40, n=32, texture=0.3)
    grids2, motions2, _ = generate_sequence(spec)
    cfg = EncodeConfig(sq_ladder=(0.1,), gof_length=20)
    assert encode_sequence(grids2, motions2, cfg) == blob


def test_bad_magic_and_version():
    with pytest.raises(FormatError):
        StreamReader(b"XXXX" + b"\x00" * 4096)


def test_truncated_stream(stream_40):
    _, blob = stream_40
    with pytest.raises(FormatError):
        StreamReader(blob[:50])


def test_frame_index_out_of_range(stream_40):
    _, blob = stream_40
    reader = StreamReader(blob)
    with pytest.raises(IndexError):
        reader.read_frame_record(40)
    with pytest.raises(IndexError):
        reader.gof_byte_range(2)


def test_gof_ranges_tile_the_payload(stream_40):
    _, blob = stream_40
    reader = StreamReader(blob)
    r0 = reader.gof_byte_range(0)
    r1 = reader.gof_byte_range(1)
    assert r0[1] == r1[0]
    header_end = reader.index.frame_offsets[0]
    reassembled = blob[:header_end] + blob[r0[0]:r0[1]] + blob[r1[0]:r1[1]] + blob[r1[1]:]
    assert reassembled == blob


def test_write_stream_enforces_gof_pattern(stream_40):
    _, blob = stream_40
    reader = StreamReader(blob)
    records = [reader.read_frame_record(t) for t in range(reader.header.frame_count)]
    records[0], records[1] = records[1], records[0]
    with pytest.raises(FormatError):
        write_stream(reader.header, records)


def test_manifest_round_trip(tmp_path):
    manifest = build_manifest(40, 20, 25.0, [
        {"sq": 1.0, "avg_bitrate_kbps": 120.0, "path": "a.rrfv"},
    ])
    path = tmp_path / "manifest.json"
    write_manifest(path, manifest)
    assert read_manifest(path) == manifest


def test_manifest_validation(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{}")
    with pytest.raises(FormatError):
        read_manifest(path)
    path.write_text("not json")
    with pytest.raises(FormatError):
        read_manifest(path)
