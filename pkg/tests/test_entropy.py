import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridvid.entropy import (
    AC_COUNT,
    EOB,
    ZRL,
    BitReader,
    BitWriter,
    RLESymbol,
    amplitude_bits,
    amplitude_value,
    dpcm_decode,
    dpcm_encode,
    huffman_build,
    huffman_decode,
    huffman_encode,
    pack_bits,
    parse_table,
    rle_decode,
    rle_encode,
    serialize_table,
    size_category,
)
from gridvid.errors import EncodeError, FormatError


class TestBits:
    def test_writer_msb_first(self):
        w = BitWriter()
        w.write(0b101, 3)
        w.write(0b1, 1)
        w.write(0xAB, 8)
        data = w.getvalue()
        assert data == bytes([0b10111010, 0b10110000])
        assert w.bit_count == 12

    def test_reader_round_trip(self):
        rng = np.random.default_rng(0)
        values = [(int(v), int(n)) for v, n in zip(rng.integers(0, 2 ** 16, 100), rng.integers(1, 17, 100))]
        w = BitWriter()
        for v, n in values:
            w.write(v & ((1 << n) - 1), n)
        r = BitReader(w.getvalue(), w.bit_count)
        for v, n in values:
            assert r.read(n) == v & ((1 << n) - 1)

    def test_reader_truncation(self):
        r = BitReader(b"\xff", 4)
        r.read(4)
        with pytest.raises(FormatError):
            r.read1()

    def test_pack_bits_matches_writer(self):
        rng = np.random.default_rng(1)
        lengths = rng.integers(1, 30, 200)
        values = np.array([int(rng.integers(0, 1 << n)) for n in lengths], np.int64)
        data, bits = pack_bits(values, lengths.astype(np.int64))
        w = BitWriter()
        for v, n in zip(values, lengths):
            w.write(int(v), int(n))
        assert data == w.getvalue()
        assert bits == w.bit_count

    def test_peek16_zero_pads(self):
        r = BitReader(bytes([0b10110000]), 4)
        assert r.peek16() >> 12 == 0b1011


class TestAmplitude:
    @given(st.integers(-(2 ** 15) + 1, 2 ** 15 - 1))
    @settings(max_examples=300, deadline=None)
    def test_round_trip(self, v):
        s = size_category(v)
        assert amplitude_value(amplitude_bits(v, s), s) == v
        if v:
            assert 2 ** (s - 1) <= abs(v) < 2 ** s

    def test_size_zero_only_for_zero(self):
        assert size_category(0) == 0
        assert size_category(1) == 1
        assert size_category(-1) == 1
        assert size_category(7) == 3
        assert size_category(8) == 4


class TestDpcm:
    def test_constant_sequence(self):
        assert dpcm_encode([5, 5, 5]).tolist() == [5, 0, 0]

    def test_singleton(self):
        assert dpcm_encode([0]).tolist() == [0]

    def test_round_trip_i32(self):
        rng = np.random.default_rng(2)
        values = rng.integers(-(2 ** 31), 2 ** 31, 1000, dtype=np.int64)
        assert np.array_equal(dpcm_decode(dpcm_encode(values)), values)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            dpcm_encode([])


class TestRle:
    def test_all_zero_block(self):
        assert rle_encode(np.zeros(AC_COUNT, np.int64)) == [EOB]

    def test_single_nonzero(self):
        ac = np.zeros(AC_COUNT, np.int64)
        ac[3] = 7
        symbols = rle_encode(ac)
        assert symbols == [RLESymbol(3, 3, 7), EOB]

    def test_long_run_emits_zrl(self):
        ac = np.zeros(AC_COUNT, np.int64)
        ac[40] = -1
        symbols = rle_encode(ac)
        assert symbols[:2] == [ZRL, ZRL]
        assert symbols[2] == RLESymbol(8, 1, -1)
        assert symbols[-1] == EOB

    def test_no_eob_when_last_slot_coded(self):
        ac = np.zeros(AC_COUNT, np.int64)
        ac[-1] = 2
        symbols = rle_encode(ac)
        assert symbols[-1].value == 2

    @given(st.integers(0, 2 ** 31 - 1), st.integers(1, 40))
    @settings(max_examples=100, deadline=None)
    def test_round_trip_and_symbol_bound(self, seed, nonzeros):
        rng = np.random.default_rng(seed)
        ac = np.zeros(AC_COUNT, np.int64)
        idx = rng.choice(AC_COUNT, size=min(nonzeros, AC_COUNT), replace=False)
        ac[idx] = rng.integers(-32767, 32768, len(idx))
        ac[idx[ac[idx] == 0]] = 1
        symbols = rle_encode(ac)
        assert np.array_equal(rle_decode(symbols), ac)
        nz = np.flatnonzero(ac)
        runs = np.diff(np.concatenate([[-1], nz])) - 1
        bound = len(nz) + int(sum(r // 16 for r in runs)) + 1
        assert len(symbols) <= bound

    def test_amplitude_overflow_rejected(self):
        ac = np.zeros(AC_COUNT, np.int64)
        ac[0] = 2 ** 15
        with pytest.raises(EncodeError):
            rle_encode(ac)

    def test_malformed_stream_rejected(self):
        with pytest.raises(FormatError):
            rle_decode([RLESymbol(200, 4, 9)] * 3)


huffman_freqs = st.dictionaries(
    st.integers(0, 255), st.integers(1, 10 ** 6), min_size=1, max_size=64
)


class TestHuffman:
    def test_two_equal_symbols_get_one_bit(self):
        table = huffman_build({0: 10, 1: 10})
        assert {length for _, length in table.codes.values()} == {1}

    def test_single_symbol_one_bit(self):
        table = huffman_build({42: 3})
        assert table.codes[42] == (0, 1)

    @given(huffman_freqs)
    @settings(max_examples=150, deadline=None)
    def test_kraft_inequality(self, freqs):
        table = huffman_build(freqs)
        assert sum(2.0 ** -l for l in table.lengths.values()) <= 1.0 + 1e-12

    @given(huffman_freqs, st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=100, deadline=None)
    def test_round_trip(self, freqs, seed):
        table = huffman_build(freqs)
        symbols = list(freqs)
        rng = np.random.default_rng(seed)
        stream = [symbols[i] for i in rng.integers(0, len(symbols), 64)]
        data, bits = huffman_encode(stream, table)
        assert huffman_decode(data, table, len(stream), bits) == stream
        max_len = max(table.lengths.values())
        assert bits <= len(stream) * max_len

    def test_skewed_frequencies_length_limited(self):
        freqs = {i: 2 ** i for i in range(40)}
        table = huffman_build(freqs)
        assert max(table.lengths.values()) <= 16
        stream = list(freqs) * 3
        data, bits = huffman_encode(stream, table)
        assert huffman_decode(data, table, len(stream), bits) == stream

    def test_unknown_symbol_rejected(self):
        table = huffman_build({1: 5, 2: 5})
        with pytest.raises(EncodeError):
            huffman_encode([3], table)

    def test_truncated_stream_rejected(self):
        table = huffman_build({i: 1 for i in range(16)})
        data, bits = huffman_encode([0, 1, 2], table)
        with pytest.raises(FormatError):
            huffman_decode(data, table, 10, bits)

    @given(huffman_freqs)
    @settings(max_examples=100, deadline=None)
    def test_table_serialization_round_trip(self, freqs):
        table = huffman_build(freqs)
        blob = serialize_table(table)
        back, consumed = parse_table(blob, 0)
        assert consumed == len(blob)
        assert back.lengths == table.lengths
        assert back.codes == table.codes

    def test_empty_table_sentinel(self):
        blob = serialize_table(None)
        back, consumed = parse_table(blob, 0)
        assert back is None and consumed == 32

    def test_determinism(self):
        freqs = {3: 7, 9: 7, 1: 2, 200: 11}
        a = huffman_build(freqs)
        b = huffman_build(dict(reversed(list(freqs.items()))))
        assert a.codes == b.codes
