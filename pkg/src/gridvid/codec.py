"""End-to-end encoder/decoder for feature-grid sequences.

The encoder is closed-loop: every prediction reference is the encoder's own
decoded reconstruction, so decoder output matches the encoder's reference
chain bit for bit and errors cannot drift across a GOF. Per GOF, frame 0 is
an I-frame coding the full feature grid; subsequent frames code the PCA-
projected residual against the motion-warped previous reconstruction.
"""

from __future__ import annotations

import math
import time
from collections import defaultdict
from contextlib import contextmanager, nullcontext
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .container import (
    FRAME_I,
    FRAME_P,
    EntropyPayload,
    FrameRecord,
    StreamHeader,
    StreamReader,
    build_manifest,
    gof_of,
    write_stream,
)
from .entropy import (
    MAX_AC_SIZE,
    BitReader,
    HuffmanTable,
    amplitude_value,
    dpcm_encode,
    huffman_build,
    pack_bits,
)
from .errors import EncodeError, FormatError, ShapeError
from .grids import (
    DenseMotionField,
    FeatureGrid,
    MotionGrid,
    OccupancyMask,
    compute_residual,
    motion_pool,
    occupancy_from_grid,
    warp_features,
)
from .transform import (
    CUBE,
    PCABasis,
    QuantizationSpec,
    default_q_matrix,
    dct3,
    dequantize,
    idct3,
    pca_fit,
    quantize,
    tile_cubes,
    unzigzag3,
    zigzag3,
)

MAX_DC_SIZE = 62                # amplitude must fit signed 64-bit packing
MOTION_BIAS = 127               # maps int8 motion components onto u8 symbols


class StageTimer:
    """Accumulates wall-clock samples per pipeline stage."""

    def __init__(self):
        self.samples: dict[str, list[float]] = defaultdict(list)

    @contextmanager
    def stage(self, name: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.samples[name].append(time.perf_counter() - start)

    def total(self, name: str) -> float:
        return sum(self.samples.get(name, ()))

    def summary(self) -> dict[str, dict[str, float]]:
        out = {}
        for name, values in self.samples.items():
            ms = [v * 1000.0 for v in values]
            out[name] = {
                "count": len(ms),
                "total_ms": sum(ms),
                "mean_ms": sum(ms) / len(ms),
                "max_ms": max(ms),
            }
        return out


def _maybe(timer: StageTimer | None, name: str):
    return timer.stage(name) if timer is not None else nullcontext()


@dataclass
class EncodeConfig:
    """Knobs of the lossy pipeline; sq_ladder lists one stream per quality."""

    sq_ladder: tuple[float, ...] = (1.0,)
    tau: float = 0.0
    gof_length: int = 20
    kernel: int = 8
    pca_rank: int | None = None
    frame_rate: float = 25.0
    q_matrix: np.ndarray | None = None
    decoder_mode: str = "direct"
    decoder_weights: bytes = b""

    def __post_init__(self):
        if not self.sq_ladder or any(s <= 0 for s in self.sq_ladder):
            raise ValueError("sq_ladder needs at least one positive scale")
        if self.tau < 0:
            raise ValueError("residual threshold must be >= 0")
        if self.gof_length < 1:
            raise ValueError("GOF length must be >= 1")
        if self.kernel < 1:
            raise ValueError("pooling kernel must be >= 1")
        if self.pca_rank is not None and self.pca_rank < 1:
            raise ValueError("PCA rank must be >= 1")

    def quantization(self, sq: float) -> QuantizationSpec:
        q = self.q_matrix if self.q_matrix is not None else default_q_matrix()
        # Round through f32 exactly like the stream header stores them, so
        # encode-side and decode-side steps agree bit for bit.
        q = np.asarray(q, dtype=np.float32).astype(np.float64)
        return QuantizationSpec(float(np.float32(sq)), q)


# ---------------------------------------------------------------------------
# coefficient payload coding


def _channel_to_rows(tensor: np.ndarray, mask: OccupancyMask, spec: QuantizationSpec) -> np.ndarray:
    """Occupied cubes of one channel -> (m, 512) quantized zigzag rows."""
    _, cubes = tile_cubes(tensor, mask)
    if not len(cubes):
        return np.zeros((0, CUBE ** 3), dtype=np.int64)
    return zigzag3(quantize(dct3(cubes), spec))


def _quantize_channels(tensors, mask: OccupancyMask, spec: QuantizationSpec):
    """Quantize all channels, then drop cubes whose coefficients are all zero.

    Pruned cubes decode to zeros either way, so the reconstruction is
    bit-identical while the mask, DC chains and EOB symbols all shrink.
    """
    rows = [_channel_to_rows(t, mask, spec) for t in tensors]
    if mask.cube_count and rows:
        stacked = np.stack(rows)
        keep = np.any(stacked != 0, axis=(0, 2))
        if not keep.all():
            origins = np.argwhere(mask.occupied)
            occupied = mask.occupied.copy()
            dropped = origins[~keep]
            occupied[dropped[:, 0], dropped[:, 1], dropped[:, 2]] = False
            mask = OccupancyMask(occupied, mask.kernel)
            rows = [r[keep] for r in rows]
    return mask, rows


def _rows_to_cubes(rows: np.ndarray, spec: QuantizationSpec,
                   timer: StageTimer | None = None) -> np.ndarray:
    """Quantized zigzag rows -> reconstructed (m, 8, 8, 8) cube values."""
    with _maybe(timer, "dequantize"):
        coeffs = dequantize(unzigzag3(rows), spec)
    with _maybe(timer, "idct"):
        return idct3(coeffs) if len(rows) else np.zeros((0, CUBE, CUBE, CUBE))


def _scatter_add_blocks(base: np.ndarray, mask: OccupancyMask, blocks: np.ndarray) -> np.ndarray:
    """Add per-cube blocks (m, 8, 8, 8, C) onto a copy of base at the occupied cubes."""
    dims = base.shape[:3]
    channels = base.shape[3]
    cdims = mask.occupied.shape
    padded = np.zeros((cdims[0] * CUBE, cdims[1] * CUBE, cdims[2] * CUBE, channels),
                      dtype=base.dtype)
    padded[: dims[0], : dims[1], : dims[2]] = base
    view = padded.reshape(cdims[0], CUBE, cdims[1], CUBE, cdims[2], CUBE, channels)
    view = view.transpose(0, 2, 4, 1, 3, 5, 6)
    if len(blocks):
        view[mask.occupied] += blocks
    return padded[: dims[0], : dims[1], : dims[2]].copy()


_POW2 = 2 ** np.arange(63, dtype=np.int64)
ZRL_SYM = 0xF0
EOB_SYM = 0x00


def _bit_sizes(values: np.ndarray) -> np.ndarray:
    """Vectorized bit_length of |values|."""
    return np.searchsorted(_POW2, np.abs(values), side="right").astype(np.int64)


@dataclass
class _RowSymbols:
    """Array form of one channel's DC/RLE symbol stream (same layout the
    scalar dpcm_encode/rle_encode pair produces, vectorized over cubes)."""

    m: int
    dc_sizes: np.ndarray
    dc_amps: np.ndarray
    ac_cube: np.ndarray             # cube index of each nonzero AC value
    ac_nzrl: np.ndarray             # ZRL symbols preceding it
    ac_syms: np.ndarray             # (run << 4) | size
    ac_sizes: np.ndarray
    ac_amps: np.ndarray
    eob: np.ndarray                 # per cube: block ends before the last slot


def _symbolize_rows(rows: np.ndarray) -> _RowSymbols:
    m = len(rows)
    empty = np.zeros(0, dtype=np.int64)
    if m == 0:
        return _RowSymbols(0, empty, empty, empty, empty, empty, empty, empty,
                           np.zeros(0, dtype=bool))
    diffs = dpcm_encode(rows[:, 0])
    dc_sizes = _bit_sizes(diffs)
    if dc_sizes.max(initial=0) > MAX_DC_SIZE:
        raise EncodeError("DC difference too large to code")
    dc_amps = np.where(diffs > 0, diffs, diffs + (np.int64(1) << dc_sizes) - 1)

    ac = rows[:, 1:]
    rr, cc = np.nonzero(ac)
    rr = rr.astype(np.int64)
    cc = cc.astype(np.int64)
    vals = ac[rr, cc].astype(np.int64)
    sizes = _bit_sizes(vals)
    if sizes.max(initial=0) > MAX_AC_SIZE:
        raise EncodeError(
            "AC coefficient magnitude exceeds the 15-bit amplitude limit; "
            "increase the quantization scale"
        )
    if len(rr):
        first = np.concatenate([[True], rr[1:] != rr[:-1]])
        prev = np.where(first, np.int64(-1), np.concatenate([[np.int64(0)], cc[:-1]]))
        runs = cc - prev - 1
    else:
        runs = empty
    nzrl = runs // 16
    syms = ((runs - 16 * nzrl) << 4) | sizes
    amps = np.where(vals > 0, vals, vals + (np.int64(1) << sizes) - 1)
    eob = np.ones(m, dtype=bool)
    if len(rr):
        eob[rr[cc == AC_LAST - 1]] = False
    return _RowSymbols(m, dc_sizes, dc_amps, rr, nzrl, syms, sizes, amps, eob)


def _table_luts(table: HuffmanTable, size: int) -> tuple[np.ndarray, np.ndarray]:
    codes = np.zeros(size, dtype=np.int64)
    lengths = np.zeros(size, dtype=np.int64)
    for sym, (code, length) in table.codes.items():
        codes[sym] = code
        lengths[sym] = length
    return codes, lengths


def _pack_symbols(sym: _RowSymbols, dc_codes, dc_lens, ac_codes, ac_lens) -> tuple[int, bytes]:
    """Scatter every code and amplitude into its bit-stream slot, then pack."""
    m = sym.m
    dc_counts = 1 + (sym.dc_sizes > 0).astype(np.int64)
    group_counts = sym.ac_nzrl + 2
    ac_per_cube = np.zeros(m, dtype=np.int64)
    if len(sym.ac_cube):
        np.add.at(ac_per_cube, sym.ac_cube, group_counts)
    cube_total = dc_counts + ac_per_cube + sym.eob
    starts = np.concatenate([[np.int64(0)], np.cumsum(cube_total)[:-1]])
    total = int(cube_total.sum())
    values = np.zeros(total, dtype=np.int64)
    lengths = np.zeros(total, dtype=np.int64)

    values[starts] = dc_codes[sym.dc_sizes]
    lengths[starts] = dc_lens[sym.dc_sizes]
    has_amp = sym.dc_sizes > 0
    values[starts[has_amp] + 1] = sym.dc_amps[has_amp]
    lengths[starts[has_amp] + 1] = sym.dc_sizes[has_amp]

    if len(sym.ac_cube):
        excl = np.cumsum(group_counts) - group_counts
        seg_first = np.concatenate([[True], sym.ac_cube[1:] != sym.ac_cube[:-1]])
        seg_idx = np.flatnonzero(seg_first)
        seg_sizes = np.diff(np.concatenate([seg_idx, [len(sym.ac_cube)]]))
        base = np.repeat(excl[seg_idx], seg_sizes)
        gstart = starts[sym.ac_cube] + dc_counts[sym.ac_cube] + (excl - base)

        total_zrl = int(sym.ac_nzrl.sum())
        if total_zrl:
            rep = np.repeat(gstart, sym.ac_nzrl)
            excl_z = np.cumsum(sym.ac_nzrl) - sym.ac_nzrl
            offs = np.arange(total_zrl, dtype=np.int64) - np.repeat(excl_z, sym.ac_nzrl)
            values[rep + offs] = ac_codes[ZRL_SYM]
            lengths[rep + offs] = ac_lens[ZRL_SYM]
        spos = gstart + sym.ac_nzrl
        values[spos] = ac_codes[sym.ac_syms]
        lengths[spos] = ac_lens[sym.ac_syms]
        values[spos + 1] = sym.ac_amps
        lengths[spos + 1] = sym.ac_sizes

    if sym.eob.any():
        epos = starts[sym.eob] + cube_total[sym.eob] - 1
        values[epos] = ac_codes[EOB_SYM]
        lengths[epos] = ac_lens[EOB_SYM]
    data, bit_count = pack_bits(values, lengths)
    return bit_count, data


def _encode_coefficients(per_channel_rows: list[np.ndarray]) -> tuple[HuffmanTable | None, HuffmanTable | None, list[tuple[int, bytes]]]:
    """Entropy-code all channels of a frame with shared per-frame tables."""
    symbolized = [_symbolize_rows(rows) for rows in per_channel_rows]
    dc_counts = np.zeros(MAX_DC_SIZE + 1, dtype=np.int64)
    ac_counts = np.zeros(256, dtype=np.int64)
    for sym in symbolized:
        if sym.m == 0:
            continue
        dc_counts += np.bincount(sym.dc_sizes, minlength=MAX_DC_SIZE + 1)
        if len(sym.ac_syms):
            ac_counts += np.bincount(sym.ac_syms, minlength=256)
        ac_counts[ZRL_SYM] += int(sym.ac_nzrl.sum())
        ac_counts[EOB_SYM] += int(sym.eob.sum())
    if not dc_counts.any():
        return None, None, [(0, b"")] * len(per_channel_rows)
    # Every coded cube emits at least an EOB, so AC frequencies are non-empty
    # whenever DC frequencies are.
    dc_table = huffman_build({s: int(c) for s, c in enumerate(dc_counts) if c})
    ac_table = huffman_build({s: int(c) for s, c in enumerate(ac_counts) if c})
    dc_codes, dc_lens = _table_luts(dc_table, MAX_DC_SIZE + 1)
    ac_codes, ac_lens = _table_luts(ac_table, 256)
    payloads = []
    for sym in symbolized:
        if sym.m == 0:
            payloads.append((0, b""))
            continue
        payloads.append(_pack_symbols(sym, dc_codes, dc_lens, ac_codes, ac_lens))
    return dc_table, ac_table, payloads


def _decode_channel(payload: tuple[int, bytes], cube_count: int,
                    dc_table: HuffmanTable | None, ac_table: HuffmanTable | None) -> np.ndarray:
    bit_count, data = payload
    rows = np.zeros((cube_count, CUBE ** 3), dtype=np.int64)
    if cube_count == 0:
        return rows
    if dc_table is None:
        raise FormatError("frame has coded cubes but no DC table")
    reader = BitReader(data, bit_count)
    dc = 0
    for i in range(cube_count):
        size = dc_table.decode_one(reader)
        amp = reader.read(size)
        dc += amplitude_value(amp, size)
        rows[i, 0] = dc
        pos = 1
        while pos <= AC_LAST:
            if ac_table is None:
                raise FormatError("frame has AC data but no AC table")
            sym = ac_table.decode_one(reader)
            run, size = sym >> 4, sym & 15
            if size == 0:
                if run == 0:
                    break
                if run == 15:
                    pos += 16
                    continue
                raise FormatError(f"invalid AC symbol {sym:#x}")
            pos += run
            if pos > AC_LAST:
                raise FormatError("AC run overflows the cube")
            amp = reader.read(size)
            rows[i, pos] = amplitude_value(amp, size)
            pos += 1
    return rows


AC_LAST = CUBE ** 3 - 1


# ---------------------------------------------------------------------------
# motion payload


def _encode_motion(motion: MotionGrid) -> EntropyPayload:
    symbols = motion.data.astype(np.int64).reshape(-1) + MOTION_BIAS
    counts = np.bincount(symbols, minlength=2 * MOTION_BIAS + 1)
    freqs = {int(sym): int(c) for sym, c in enumerate(counts) if c}
    table = huffman_build(freqs)
    codes, lengths = table.encode_arrays(symbols)
    data, bit_count = pack_bits(codes, lengths)
    return EntropyPayload(table, len(symbols), bit_count, data)


def _decode_motion(payload: EntropyPayload, dims, kernel: int) -> MotionGrid:
    cdims = tuple(-(-n // kernel) for n in dims)
    expected = cdims[0] * cdims[1] * cdims[2] * 3
    if payload.count != expected:
        raise FormatError(f"motion payload has {payload.count} symbols, expected {expected}")
    if payload.table is None:
        raise FormatError("motion payload is missing its Huffman table")
    reader = BitReader(payload.data, payload.bit_count)
    flat = np.empty(expected, dtype=np.int64)
    decode_one = payload.table.decode_one
    for i in range(expected):
        flat[i] = decode_one(reader) - MOTION_BIAS
    return MotionGrid(flat.reshape(cdims + (3,)).astype(np.int8), kernel)


# ---------------------------------------------------------------------------
# frame encode/decode


def _reconstruct_iframe(per_channel_rows, mask, dims, spec, timer=None) -> np.ndarray:
    cubes = [_rows_to_cubes(rows, spec, timer) for rows in per_channel_rows]
    with _maybe(timer, "other"):
        blocks = np.stack(cubes, axis=-1).astype(np.float32)
        zeros = np.zeros(dims + (len(per_channel_rows),), dtype=np.float32)
        return _scatter_add_blocks(zeros, mask, blocks)


def _reconstruct_pframe(per_channel_rows, mask, dims, basis32: np.ndarray,
                        base: FeatureGrid, spec, timer=None) -> FeatureGrid:
    cubes = [_rows_to_cubes(rows, spec, timer) for rows in per_channel_rows]
    with _maybe(timer, "other"):
        if cubes:
            projected = np.stack(cubes, axis=-1)                  # (m, 8, 8, 8, q)
            blocks = (projected @ basis32.T.astype(np.float64)).astype(np.float32)
            data = _scatter_add_blocks(base.data, mask, blocks)
        else:                       # residual quantized away entirely
            data = base.data.copy()
        return FeatureGrid(data, base.bbox_min.copy(), base.bbox_max.copy())


def _encode_iframe(grid: FeatureGrid, spec: QuantizationSpec) -> tuple[FrameRecord, FeatureGrid]:
    mask = occupancy_from_grid(grid.data, CUBE)
    tensors = [grid.data[..., c] for c in range(grid.channels)]
    mask, rows = _quantize_channels(tensors, mask, spec)
    dc_table, ac_table, payloads = _encode_coefficients(rows)
    record = FrameRecord(
        frame_type=FRAME_I, mask=mask,
        dc_table=dc_table, ac_table=ac_table, channel_payloads=payloads,
    )
    recon = FeatureGrid(
        _reconstruct_iframe(rows, mask, grid.dims, spec),
        grid.bbox_min.copy(), grid.bbox_max.copy(),
    )
    return record, recon


def _encode_pframe(grid: FeatureGrid, reference: FeatureGrid, dense: DenseMotionField,
                   spec: QuantizationSpec, cfg: EncodeConfig) -> tuple[FrameRecord, FeatureGrid]:
    if dense.dims != grid.dims:
        raise ShapeError(f"motion dims {dense.dims} do not match grid dims {grid.dims}")
    motion = motion_pool(dense, cfg.kernel)
    base = warp_features(reference, motion)
    residual = compute_residual(grid, base, cfg.tau)
    mask = occupancy_from_grid(residual.data, CUBE)
    n = grid.channels

    # If the raw residual already quantizes to all-zero coefficients, coding
    # it through any basis reconstructs zero; emit an empty record instead.
    channel_mask, _ = _quantize_channels(
        [residual.data[..., c] for c in range(n)], mask, spec)
    if not channel_mask.cube_count:
        mask = channel_mask
        basis32 = np.zeros((n, 0), dtype=np.float32)
        rows: list[np.ndarray] = []
    else:
        rank = n if cfg.pca_rank is None else min(cfg.pca_rank, n)
        nonempty = residual.data[np.any(residual.data != 0, axis=3)]
        if len(nonempty):
            basis = pca_fit(nonempty, rank)
            # Directions with (numerically) zero variance carry no residual
            # energy; dropping their columns is lossless and shrinks the basis.
            live = int(np.sum(basis.energy > basis.energy[0] * 1e-10)) if basis.energy[0] > 0 else 1
            rank = max(1, min(rank, live))
            basis = PCABasis(basis.matrix[:, :rank], basis.energy[:rank])
        else:
            basis = PCABasis(np.eye(n)[:, :rank])
        basis32 = basis.matrix.astype(np.float32)

        projected = residual.data @ basis32.astype(np.float64)
        tensors = [projected[..., c] for c in range(rank)]
        mask, rows = _quantize_channels(tensors, mask, spec)
        if not mask.cube_count:
            basis32 = np.zeros((n, 0), dtype=np.float32)
            rows = []
    dc_table, ac_table, payloads = _encode_coefficients(rows)
    record = FrameRecord(
        frame_type=FRAME_P, mask=mask, pca=basis32,
        motion=_encode_motion(motion),
        dc_table=dc_table, ac_table=ac_table, channel_payloads=payloads,
    )
    recon = _reconstruct_pframe(rows, mask, grid.dims, basis32, base, spec)
    return record, recon


def encode_sequence(grids: list[FeatureGrid], motions: list[DenseMotionField],
                    cfg: EncodeConfig, sq: float | None = None,
                    recons: list | None = None) -> bytes:
    """Encode a grid sequence into one seekable stream at a single quality.

    ``motions[t]`` maps frame t+1 voxels back into frame t; it must hold
    len(grids) - 1 entries. Pass a list as ``recons`` to collect the
    encoder-side reconstruction of every frame (the closed-loop references).
    """
    if not grids:
        raise ValueError("cannot encode an empty sequence")
    if len(motions) != len(grids) - 1:
        raise ShapeError(f"need {len(grids) - 1} motion fields, got {len(motions)}")
    dims, channels = grids[0].dims, grids[0].channels
    for g in grids:
        if g.dims != dims or g.channels != channels:
            raise ShapeError("all grids in a sequence must share dims and channels")
    sq = cfg.sq_ladder[0] if sq is None else sq
    # The header stores the scale as f32; quantize with that exact value so
    # decoder arithmetic reproduces the encoder's bit for bit.
    sq = float(np.float32(sq))
    spec = cfg.quantization(sq)

    header = StreamHeader(
        dims=dims, channels=channels,
        bbox_min=grids[0].bbox_min, bbox_max=grids[0].bbox_max,
        gof_length=cfg.gof_length, kernel=cfg.kernel,
        frame_count=len(grids), frame_rate=cfg.frame_rate,
        default_sq=sq, q_matrix=spec.q_matrix,
        decoder_mode=cfg.decoder_mode, decoder_weights=cfg.decoder_weights,
    )
    records = []
    reference: FeatureGrid | None = None
    for t, grid in enumerate(grids):
        if t % cfg.gof_length == 0:
            record, reference = _encode_iframe(grid, spec)
        else:
            record, reference = _encode_pframe(grid, reference, motions[t - 1], spec, cfg)
        records.append(record)
        if recons is not None:
            recons.append(reference)
    return write_stream(header, records)


def encode_quality_ladder(grids, motions, cfg: EncodeConfig, out_dir, basename: str = "stream"):
    """Encode one stream per ladder entry; returns (manifest dict, stream paths)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    qualities = []
    paths = []
    for sq in cfg.sq_ladder:
        blob = encode_sequence(grids, motions, cfg, sq)
        path = out_dir / f"{basename}_sq{sq:g}.rrfv"
        path.write_bytes(blob)
        paths.append(path)
        kbps = len(blob) * 8.0 * cfg.frame_rate / len(grids) / 1000.0
        qualities.append({"sq": sq, "avg_bitrate_kbps": round(kbps, 3), "path": path.name})
    manifest = build_manifest(len(grids), cfg.gof_length, cfg.frame_rate, qualities)
    return manifest, paths


def decode_step(reader: StreamReader, t: int, reference: FeatureGrid | None,
                timer: StageTimer | None = None) -> FeatureGrid:
    """Decode frame t given the reconstruction of frame t-1 (None at GOF starts)."""
    header = reader.header
    spec = QuantizationSpec(header.default_sq, header.q_matrix)
    with _maybe(timer, "other"):
        record = reader.read_frame_record(t)
    expected = FRAME_I if t % header.gof_length == 0 else FRAME_P
    if record.frame_type != expected:
        raise FormatError(f"frame {t} has the wrong type for its GOF position")
    cube_count = record.mask.cube_count

    with _maybe(timer, "entropy"):
        rows = [
            _decode_channel(payload, cube_count, record.dc_table, record.ac_table)
            for payload in record.channel_payloads
        ]
        motion = None
        if record.frame_type == FRAME_P:
            motion = _decode_motion(record.motion, header.dims, header.kernel)

    if record.frame_type == FRAME_I:
        data = _reconstruct_iframe(rows, record.mask, header.dims, spec, timer)
        return FeatureGrid(data, header.bbox_min.copy(), header.bbox_max.copy())

    if reference is None:
        raise ValueError(f"frame {t} is a P-frame and needs its predecessor")
    if record.pca.shape[1] != len(rows):
        raise FormatError("PCA basis rank does not match coded channel count")
    with _maybe(timer, "other"):
        base = warp_features(reference, motion)
    return _reconstruct_pframe(rows, record.mask, header.dims, record.pca, base, spec, timer)


def decode_frame(reader: StreamReader, t: int, timer: StageTimer | None = None) -> FeatureGrid:
    """Decode frame t from its GOF's I-frame through the P-chain."""
    if not 0 <= t < reader.header.frame_count:
        raise IndexError(f"frame {t} out of range [0, {reader.header.frame_count})")
    g, _ = gof_of(t, reader.header.gof_length)
    start = g * reader.header.gof_length
    grid = decode_step(reader, start, None, timer)
    for k in range(start + 1, t + 1):
        grid = decode_step(reader, k, grid, timer)
    return grid


def psnr(reference: np.ndarray, test: np.ndarray, peak: float) -> float:
    """Peak signal-to-noise ratio in dB; identical inputs give +inf."""
    a = np.asarray(reference, dtype=np.float64)
    b = np.asarray(test, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    if peak <= 0:
        raise ValueError("peak must be > 0")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def stream_report(reader: StreamReader) -> dict:
    """Per-frame byte accounting split residual/motion/PCA/other, plus totals."""
    header = reader.header
    frames = []
    totals = defaultdict(int)
    for t in range(header.frame_count):
        record = reader.read_frame_record(t)
        row = {
            "frame": t,
            "type": "I" if record.frame_type == FRAME_I else "P",
            "gof": gof_of(t, header.gof_length)[0],
            **record.sizes,
            "total": record.total_bytes,
        }
        frames.append(row)
        for key in ("residual", "motion", "pca", "other"):
            totals[key] += record.sizes[key]
        totals["total"] += record.total_bytes
    nx, ny, nz = header.dims
    raw_bytes = nx * ny * nz * header.channels * 4 * header.frame_count
    i_sizes = [f["total"] for f in frames if f["type"] == "I"]
    p_sizes = [f["total"] for f in frames if f["type"] == "P"]
    return {
        "frame_count": header.frame_count,
        "gof_length": header.gof_length,
        "gof_count": header.gof_count,
        "sq": header.default_sq,
        "frames": frames,
        "totals": dict(totals),
        "raw_bytes": raw_bytes,
        "compression_ratio": raw_bytes / totals["total"] if totals["total"] else math.inf,
        "mean_i_bytes": sum(i_sizes) / len(i_sizes) if i_sizes else 0.0,
        "mean_p_bytes": sum(p_sizes) / len(p_sizes) if p_sizes else 0.0,
    }
