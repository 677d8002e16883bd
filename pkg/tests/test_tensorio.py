import json
import struct

import numpy as np
import pytest

from saltkit import (
    RowStats,
    Vocabulary,
    read_embedding,
    read_id_stream,
    read_vocabulary,
    row_stats,
    write_embedding,
    write_id_stream,
    write_vocabulary,
)
from saltkit.errors import (
    BadMagicError,
    DimensionError,
    FormatError,
    NonFiniteValueError,
    TruncatedPayloadError,
    VocabularyError,
)


def emb_bytes(rows, cols, values):
    return b"SALTEMB1" + struct.pack("<II", rows, cols) + struct.pack(f"<{len(values)}f", *values)


class TestEmbeddingFormat:
    def test_direct_encoding(self, tmp_path):
        p = tmp_path / "m.emb"
        p.write_bytes(emb_bytes(2, 3, [1, 2, 3, 4, 5, 6]))
        m = read_embedding(p)
        assert m.shape == (2, 3)
        assert m.dtype == np.float32
        np.testing.assert_array_equal(m[0], [1, 2, 3])

    def test_write_single_value_layout(self, tmp_path):
        p = tmp_path / "m.emb"
        write_embedding(np.array([[0.5]], dtype=np.float32), p)
        raw = p.read_bytes()
        assert raw[:8] == b"SALTEMB1"
        assert struct.unpack("<II", raw[8:16]) == (1, 1)
        assert raw[16:] == bytes.fromhex("0000003f")

    def test_roundtrip_bytes_and_values(self, tmp_path, rng):
        m = rng.standard_normal((7, 5)).astype(np.float32)
        p = tmp_path / "m.emb"
        write_embedding(m, p)
        back = read_embedding(p)
        np.testing.assert_array_equal(back, m)
        p2 = tmp_path / "m2.emb"
        write_embedding(back, p2)
        assert p.read_bytes() == p2.read_bytes()

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "m.emb"
        p.write_bytes(emb_bytes(2, 3, [1, 2, 3, 4, 5]))
        with pytest.raises(TruncatedPayloadError):
            read_embedding(p)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "m.emb"
        p.write_bytes(b"NOTMAGIC" + struct.pack("<II", 1, 1) + struct.pack("<f", 1.0))
        with pytest.raises(BadMagicError):
            read_embedding(p)

    def test_non_finite_rejected(self, tmp_path):
        p = tmp_path / "m.emb"
        p.write_bytes(emb_bytes(1, 2, [1.0, float("nan")]))
        with pytest.raises(NonFiniteValueError):
            read_embedding(p)
        p.write_bytes(emb_bytes(1, 2, [float("inf"), 1.0]))
        with pytest.raises(NonFiniteValueError):
            read_embedding(p)

    def test_zero_dimension_rejected(self, tmp_path):
        p = tmp_path / "m.emb"
        p.write_bytes(b"SALTEMB1" + struct.pack("<II", 0, 3))
        with pytest.raises(DimensionError):
            read_embedding(p)

    def test_dimension_overflow_rejected(self, tmp_path):
        p = tmp_path / "m.emb"
        p.write_bytes(b"SALTEMB1" + struct.pack("<II", 0xFFFFFFFF, 0xFFFFFFFF))
        with pytest.raises(DimensionError):
            read_embedding(p)

    def test_trailing_data_rejected(self, tmp_path):
        p = tmp_path / "m.emb"
        p.write_bytes(emb_bytes(1, 1, [1.0]) + b"x")
        with pytest.raises(FormatError):
            read_embedding(p)

    def test_zero_row_write_rejected(self, tmp_path):
        with pytest.raises(DimensionError):
            write_embedding(np.empty((0, 4), dtype=np.float32), tmp_path / "m.emb")

    def test_non_finite_write_rejected(self, tmp_path):
        with pytest.raises(NonFiniteValueError):
            write_embedding(np.array([[np.nan]]), tmp_path / "m.emb")

    def test_failed_write_leaves_nothing(self, tmp_path):
        target = tmp_path / "m.emb"
        with pytest.raises(NonFiniteValueError):
            write_embedding(np.array([[np.inf, 1.0]]), target)
        assert list(tmp_path.iterdir()) == []


class TestVocabularyFormat:
    def test_order_preserved(self, tmp_path):
        p = tmp_path / "v.json"
        p.write_text(json.dumps(["a", "Ġb", "##c"]), encoding="utf-8")
        v = read_vocabulary(p)
        assert len(v) == 3
        assert v.tokens == ["a", "Ġb", "##c"]
        assert v.index == {"a": 0, "Ġb": 1, "##c": 2}

    def test_duplicate_rejected(self, tmp_path):
        p = tmp_path / "v.json"
        p.write_text(json.dumps(["a", "a"]), encoding="utf-8")
        with pytest.raises(VocabularyError):
            read_vocabulary(p)

    def test_empty_rejected(self, tmp_path):
        p = tmp_path / "v.json"
        p.write_text("[]", encoding="utf-8")
        with pytest.raises(VocabularyError):
            read_vocabulary(p)

    def test_malformed_json_rejected(self, tmp_path):
        p = tmp_path / "v.json"
        p.write_text("[\"a\",", encoding="utf-8")
        with pytest.raises(VocabularyError):
            read_vocabulary(p)

    def test_non_utf8_rejected(self, tmp_path):
        p = tmp_path / "v.json"
        p.write_bytes(b'["a", "\xff\xfe"]')
        with pytest.raises(VocabularyError):
            read_vocabulary(p)

    def test_non_string_entry_rejected(self, tmp_path):
        p = tmp_path / "v.json"
        p.write_text("[1, 2]", encoding="utf-8")
        with pytest.raises(VocabularyError):
            read_vocabulary(p)

    def test_roundtrip_with_odd_tokens(self, tmp_path):
        tokens = ["a b", "line\nbreak", "▁", "Ġcat", "tab\t"]
        v = Vocabulary.from_tokens(tokens)
        p = tmp_path / "v.json"
        write_vocabulary(v, p)
        assert read_vocabulary(p).tokens == tokens


class TestRowStats:
    def test_two_point_symmetric(self):
        m = np.array([[0, 0], [2, 2]], dtype=np.float32)
        s = row_stats(m)
        np.testing.assert_allclose(s.mean, [1, 1])
        np.testing.assert_allclose(s.std, [1, 1])

    def test_single_row_degenerate(self):
        s = row_stats(np.array([[3, 4]], dtype=np.float32))
        np.testing.assert_allclose(s.mean, [3, 4])
        np.testing.assert_allclose(s.std, [0, 0])

    def test_matches_two_pass_oracle(self, rng):
        m = rng.standard_normal((100, 9)).astype(np.float32)
        s = row_stats(m)
        # independent two-pass recomputation in plain Python loops
        for j in range(m.shape[1]):
            col = [float(m[i, j]) for i in range(m.shape[0])]
            mean = sum(col) / len(col)
            var = sum((x - mean) ** 2 for x in col) / len(col)
            assert abs(s.mean[j] - mean) < 1e-6
            assert abs(s.std[j] - var**0.5) < 1e-6

    def test_subset_selection(self, rng):
        m = rng.standard_normal((20, 4)).astype(np.float32)
        s = row_stats(m, row_subset=[3, 7, 11])
        oracle = row_stats(m[[3, 7, 11]])
        np.testing.assert_allclose(s.mean, oracle.mean, atol=1e-12)
        np.testing.assert_allclose(s.std, oracle.std, atol=1e-12)

    def test_empty_subset_rejected(self, rng):
        with pytest.raises(ValueError):
            row_stats(np.ones((3, 2), dtype=np.float32), row_subset=[])

    def test_pooled_moments_partition(self, rng):
        m = rng.standard_normal((60, 5)).astype(np.float32)
        parts = [list(range(0, 13)), list(range(13, 37)), list(range(37, 60))]
        stats = [row_stats(m, row_subset=p) for p in parts]
        sizes = [len(p) for p in parts]
        n = sum(sizes)
        mean = sum(k * s.mean for k, s in zip(sizes, stats)) / n
        var = sum(k * (s.std**2 + s.mean**2) for k, s in zip(sizes, stats)) / n - mean**2
        full = row_stats(m)
        np.testing.assert_allclose(full.mean, mean, atol=1e-6)
        np.testing.assert_allclose(full.std, np.sqrt(var), atol=1e-6)


class TestIdStream:
    def test_roundtrip(self, tmp_path):
        samples = [[1, 2, 3], [], [7, 8]]
        p = tmp_path / "ids.bin"
        write_id_stream(samples, p)
        back = read_id_stream(p)
        assert [list(s) for s in back] == samples

    def test_truncated_rejected(self, tmp_path):
        p = tmp_path / "ids.bin"
        write_id_stream([[1, 2, 3]], p)
        p.write_bytes(p.read_bytes()[:-2])
        with pytest.raises(TruncatedPayloadError):
            read_id_stream(p)

    def test_bad_magic_rejected(self, tmp_path):
        p = tmp_path / "ids.bin"
        p.write_bytes(b"WRONGMAG" + struct.pack("<I", 0))
        with pytest.raises(BadMagicError):
            read_id_stream(p)
