"""Lossless back end: DPCM, run-length symbols, canonical Huffman, bit I/O.

Bit order is most-significant-bit first within each byte; payloads pad the
final byte with zero bits. Negative amplitudes use the JPEG one's-complement
convention. All of these choices are pinned by the stream version.
"""

from __future__ import annotations

from dataclasses import dataclass
from heapq import heapify, heappop, heappush
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import EncodeError, FormatError

AC_COUNT = 511                  # AC coefficients per 8^3 cube
MAX_CODE_LENGTH = 16
MAX_AC_SIZE = 15                # (run, size) packs into one byte
MAX_DC_SIZE = 63


class RLESymbol(NamedTuple):
    """Run of zeros, size category, and the nonzero value it precedes.

    (0, 0) is end-of-block, (15, 0) is a run of 16 zeros; both carry value 0.
    """

    run: int
    size: int
    value: int


EOB = RLESymbol(0, 0, 0)
ZRL = RLESymbol(15, 0, 0)


def size_category(value: int) -> int:
    """Number of bits needed for |value|; 0 only for value 0."""
    return int(abs(int(value))).bit_length()


def amplitude_bits(value: int, size: int) -> int:
    """One's-complement amplitude: positive values verbatim, negative offset by 2^size - 1."""
    return value if value > 0 else value + (1 << size) - 1


def amplitude_value(bits: int, size: int) -> int:
    if size == 0:
        return 0
    if bits < (1 << (size - 1)):
        return bits - (1 << size) + 1
    return bits


class BitWriter:
    """MSB-first bit accumulator."""

    __slots__ = ("_buf", "_acc", "_pending", "bit_count")

    def __init__(self):
        self._buf = bytearray()
        self._acc = 0
        self._pending = 0
        self.bit_count = 0

    def write(self, value: int, nbits: int) -> None:
        if nbits == 0:
            return
        self._acc = (self._acc << nbits) | (value & ((1 << nbits) - 1))
        self._pending += nbits
        self.bit_count += nbits
        while self._pending >= 8:
            self._pending -= 8
            self._buf.append((self._acc >> self._pending) & 0xFF)
        self._acc &= (1 << self._pending) - 1

    def getvalue(self) -> bytes:
        if self._pending:
            return bytes(self._buf) + bytes([(self._acc << (8 - self._pending)) & 0xFF])
        return bytes(self._buf)


class BitReader:
    """MSB-first bit cursor over immutable bytes."""

    __slots__ = ("data", "pos", "limit")

    def __init__(self, data: bytes, bit_count: int | None = None):
        self.data = data
        self.pos = 0
        self.limit = len(data) * 8 if bit_count is None else bit_count
        if self.limit > len(data) * 8:
            raise FormatError("declared bit count exceeds payload size")

    def read1(self) -> int:
        pos = self.pos
        if pos >= self.limit:
            raise FormatError("truncated bitstream")
        self.pos = pos + 1
        return (self.data[pos >> 3] >> (7 - (pos & 7))) & 1

    def read(self, nbits: int) -> int:
        if nbits == 0:
            return 0
        pos = self.pos
        end = pos + nbits
        if end > self.limit:
            raise FormatError("truncated bitstream")
        self.pos = end
        first = pos >> 3
        last = (end + 7) >> 3
        chunk = int.from_bytes(self.data[first:last], "big")
        return (chunk >> ((last << 3) - end)) & ((1 << nbits) - 1)

    def peek16(self) -> int:
        """Next 16 bits left-aligned, zero-padded past the end of data."""
        first = self.pos >> 3
        chunk = self.data[first: first + 3]
        window = int.from_bytes(chunk, "big") << (8 * (3 - len(chunk)))
        return (window >> (8 - (self.pos & 7))) & 0xFFFF

    def skip(self, nbits: int) -> None:
        if self.pos + nbits > self.limit:
            raise FormatError("truncated bitstream")
        self.pos += nbits


def pack_bits(values: np.ndarray, lengths: np.ndarray) -> tuple[bytes, int]:
    """Concatenate variable-length big-endian codes into padded bytes.

    Vectorized equivalent of feeding every (value, length) pair to BitWriter.
    Returns (payload, total bit count).
    """
    values = np.asarray(values, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)
    if len(values) == 0:
        return b"", 0
    total = int(lengths.sum())
    width = int(lengths.max())
    shifts = lengths[:, None] - 1 - np.arange(width, dtype=np.int64)[None, :]
    bits = (values[:, None] >> np.maximum(shifts, 0)) & 1
    flat = bits[shifts >= 0].astype(np.uint8)
    return np.packbits(flat).tobytes(), total


def dpcm_encode(values: Sequence[int] | np.ndarray) -> np.ndarray:
    """First value verbatim, then successive differences."""
    arr = np.asarray(values, dtype=np.int64)
    if arr.size == 0:
        raise ValueError("DPCM input must be non-empty")
    out = arr.copy()
    out[1:] = arr[1:] - arr[:-1]
    return out


def dpcm_decode(diffs: Sequence[int] | np.ndarray) -> np.ndarray:
    arr = np.asarray(diffs, dtype=np.int64)
    if arr.size == 0:
        raise ValueError("DPCM input must be non-empty")
    return np.cumsum(arr)


def rle_encode(ac: np.ndarray) -> list[RLESymbol]:
    """JPEG-style run-length coding of one cube's 511 AC coefficients."""
    ac = np.asarray(ac, dtype=np.int64)
    if ac.shape != (AC_COUNT,):
        raise FormatError(f"expected {AC_COUNT} AC values, got {ac.shape}")
    symbols: list[RLESymbol] = []
    prev = -1
    for idx in np.flatnonzero(ac):
        run = int(idx) - prev - 1
        while run > 15:
            symbols.append(ZRL)
            run -= 16
        value = int(ac[idx])
        size = size_category(value)
        if size > MAX_AC_SIZE:
            raise EncodeError(
                f"AC coefficient {value} exceeds the {MAX_AC_SIZE}-bit amplitude limit; "
                "increase the quantization scale"
            )
        symbols.append(RLESymbol(run, size, value))
        prev = int(idx)
    if prev != AC_COUNT - 1:
        symbols.append(EOB)
    return symbols


def rle_decode(symbols: Iterable[RLESymbol]) -> np.ndarray:
    out = np.zeros(AC_COUNT, dtype=np.int64)
    pos = 0
    terminated = False
    for sym in symbols:
        if terminated:
            raise FormatError("RLE symbols continue past end-of-block")
        if sym.size == 0:
            if sym.run == 0:        # EOB
                terminated = True
                continue
            if sym.run == 15:       # ZRL
                pos += 16
                continue
            raise FormatError(f"invalid zero-size RLE symbol {sym!r}")
        pos += sym.run
        if pos >= AC_COUNT:
            raise FormatError("RLE symbols overflow the block")
        out[pos] = sym.value
        pos += 1
    if not terminated and pos != AC_COUNT:
        raise FormatError("RLE block ended without EOB before filling the block")
    return out


@dataclass
class HuffmanTable:
    """Canonical prefix code; decoding needs only the code length histogram."""

    lengths: dict[int, int]                 # symbol -> code length

    def __post_init__(self):
        if not self.lengths:
            raise ValueError("Huffman table needs at least one symbol")
        if max(self.lengths.values()) > MAX_CODE_LENGTH:
            raise ValueError("code length exceeds the 16-bit cap")
        ordered = sorted(self.lengths.items(), key=lambda kv: (kv[1], kv[0]))
        self.codes: dict[int, tuple[int, int]] = {}
        self._first_code = [0] * (MAX_CODE_LENGTH + 2)
        self._syms_at: list[list[int]] = [[] for _ in range(MAX_CODE_LENGTH + 1)]
        code = 0
        prev_len = ordered[0][1]
        for sym, length in ordered:
            code <<= length - prev_len
            prev_len = length
            if not self._syms_at[length]:
                self._first_code[length] = code
            self.codes[sym] = (code, length)
            self._syms_at[length].append(sym)
            code += 1
        kraft = sum(2.0 ** -l for l in self.lengths.values())
        if kraft > 1.0 + 1e-12:
            raise ValueError(f"code lengths violate the Kraft inequality ({kraft})")

    @property
    def symbols(self) -> list[int]:
        return sorted(self.lengths)

    def encode_arrays(self, symbols: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Map a symbol array to (code, length) arrays for bulk bit packing."""
        max_sym = max(self.lengths)
        code_lut = np.zeros(max_sym + 1, dtype=np.int64)
        len_lut = np.zeros(max_sym + 1, dtype=np.int64)
        for sym, (code, length) in self.codes.items():
            code_lut[sym] = code
            len_lut[sym] = length
        symbols = np.asarray(symbols, dtype=np.int64)
        if symbols.size and (symbols.max() > max_sym or np.any(len_lut[symbols] == 0)):
            bad = symbols[(symbols > max_sym) | (len_lut[np.minimum(symbols, max_sym)] == 0)][0]
            raise EncodeError(f"symbol {int(bad)} is not in the Huffman table")
        return code_lut[symbols], len_lut[symbols]

    def decode_one(self, reader: BitReader) -> int:
        window = reader.peek16()
        first = self._first_code
        syms = self._syms_at
        for length in range(1, MAX_CODE_LENGTH + 1):
            bucket = syms[length]
            if bucket:
                idx = (window >> (16 - length)) - first[length]
                if 0 <= idx < len(bucket):
                    reader.skip(length)
                    return bucket[idx]
        raise FormatError("invalid Huffman code")


def _merge_lengths(freqs: list[tuple[int, int]]) -> dict[int, int]:
    """Standard Huffman merge; ties broken by the smallest symbol in each group."""
    lengths = {sym: 0 for sym, _ in freqs}
    heap = [(freq, sym, [sym]) for sym, freq in freqs]
    heapify(heap)
    while len(heap) > 1:
        fa, sa, group_a = heappop(heap)
        fb, sb, group_b = heappop(heap)
        for sym in group_a:
            lengths[sym] += 1
        for sym in group_b:
            lengths[sym] += 1
        heappush(heap, (fa + fb, min(sa, sb), group_a + group_b))
    return lengths


def _limit_lengths(lengths: dict[int, int], cap: int = MAX_CODE_LENGTH) -> dict[int, int]:
    """Rebalance a code-length histogram so no code exceeds ``cap`` (JPEG-style)."""
    max_len = max(lengths.values())
    if max_len <= cap:
        return lengths
    counts = [0] * (max_len + 1)
    for l in lengths.values():
        counts[l] += 1
    i = max_len
    while i > cap:
        while counts[i] > 0:
            j = i - 2
            while counts[j] == 0:
                j -= 1
            counts[i] -= 2
            counts[i - 1] += 1
            counts[j + 1] += 2
            counts[j] -= 1
        i -= 1
    ordered = sorted(lengths, key=lambda s: (lengths[s], s))
    rebalanced = {}
    length = 1
    for sym in ordered:
        while counts[length] == 0:
            length += 1
        rebalanced[sym] = length
        counts[length] -= 1
    return rebalanced


def huffman_build(freqs: Mapping[int, int]) -> HuffmanTable:
    """Build a canonical, length-limited Huffman table from symbol frequencies."""
    present = sorted((sym, count) for sym, count in freqs.items() if count > 0)
    if not present:
        raise ValueError("Huffman table needs at least one symbol with nonzero frequency")
    if len(present) == 1:
        return HuffmanTable({present[0][0]: 1})
    lengths = _merge_lengths(present)
    return HuffmanTable(_limit_lengths(lengths))


def huffman_encode(symbols: Sequence[int], table: HuffmanTable) -> tuple[bytes, int]:
    """Encode a symbol sequence; returns (payload bytes, bit count)."""
    codes, lengths = table.encode_arrays(np.asarray(symbols, dtype=np.int64))
    return pack_bits(codes, lengths)


def huffman_decode(data: bytes, table: HuffmanTable, count: int, bit_count: int | None = None) -> list[int]:
    reader = BitReader(data, bit_count)
    return [table.decode_one(reader) for _ in range(count)]


def serialize_table(table: HuffmanTable | None) -> bytes:
    """32-byte length histogram followed by symbols in canonical order."""
    counts = np.zeros(MAX_CODE_LENGTH, dtype="<u2")
    symbols = bytearray()
    if table is not None:
        ordered = sorted(table.lengths.items(), key=lambda kv: (kv[1], kv[0]))
        for sym, length in ordered:
            counts[length - 1] += 1
            if not 0 <= sym <= 255:
                raise EncodeError(f"symbol {sym} does not fit the one-byte table format")
            symbols.append(sym)
    return counts.tobytes() + bytes(symbols)


def parse_table(buf: bytes, offset: int) -> tuple[HuffmanTable | None, int]:
    """Inverse of serialize_table; returns (table or None, new offset)."""
    if offset + 2 * MAX_CODE_LENGTH > len(buf):
        raise FormatError("truncated Huffman table")
    counts = np.frombuffer(buf, dtype="<u2", count=MAX_CODE_LENGTH, offset=offset)
    offset += 2 * MAX_CODE_LENGTH
    total = int(counts.sum())
    if total == 0:
        return None, offset
    if offset + total > len(buf):
        raise FormatError("truncated Huffman table symbols")
    lengths: dict[int, int] = {}
    pos = offset
    for length_minus_1, n in enumerate(counts):
        for _ in range(int(n)):
            lengths[buf[pos]] = length_minus_1 + 1
            pos += 1
    if len(lengths) != total:
        raise FormatError("duplicate symbol in Huffman table")
    return HuffmanTable(lengths), pos
