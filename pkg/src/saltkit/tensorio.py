"""Bit-exact I/O for embedding matrices, vocabularies, and token-id streams.

On-disk formats:

* Embedding matrix: 8-byte ASCII magic ``SALTEMB1``, rows and cols as
  unsigned 32-bit little-endian integers, then ``rows * cols`` IEEE-754
  32-bit little-endian floats in row-major order.
* Vocabulary: UTF-8 JSON array of strings; order defines token ids.
* Token-id stream: 8-byte magic ``SALTIDS1``, sample count as u32 LE,
  then one u32 length per sample, then all ids concatenated as u32 LE.

All writes go through a temp-file-plus-rename so a failed run never
leaves a truncated artifact behind.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Sequence

import numpy as np

from .errors import (
    BadMagicError,
    DimensionError,
    NonFiniteValueError,
    TruncatedPayloadError,
    FormatError,
    VocabularyError,
)

EMBEDDING_MAGIC = b"SALTEMB1"
IDSTREAM_MAGIC = b"SALTIDS1"

# Refuse headers describing more than 2**40 elements (4 TiB of floats);
# anything larger is a corrupt or hostile file, not a real checkpoint.
_MAX_ELEMENTS = 1 << 40

_IO_CHUNK_ROWS = 8192


@dataclass(frozen=True)
class Vocabulary:
    """Ordered token list with a string-to-id index.

    Token ids are contiguous ``[0, len)`` and equal the list position.
    """

    tokens: list[str]
    index: dict[str, int]

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> "Vocabulary":
        toks = list(tokens)
        if not toks:
            raise VocabularyError("vocabulary must contain at least one token")
        index: dict[str, int] = {}
        for i, tok in enumerate(toks):
            if not isinstance(tok, str):
                raise VocabularyError(f"token at id {i} is not a string")
            if tok in index:
                raise VocabularyError(f"duplicate token {tok!r} at ids {index[tok]} and {i}")
            index[tok] = i
        return cls(tokens=toks, index=index)

    def __len__(self) -> int:
        return len(self.tokens)

    def __getitem__(self, token_id: int) -> str:
        return self.tokens[token_id]


@dataclass(frozen=True)
class RowStats:
    """Per-dimension mean and population standard deviation of matrix rows."""

    mean: np.ndarray
    std: np.ndarray


def _validate_matrix(matrix: np.ndarray) -> np.ndarray:
    if matrix.ndim != 2:
        raise DimensionError(f"embedding matrix must be 2-D, got shape {matrix.shape}")
    rows, cols = matrix.shape
    if rows < 1 or cols < 1:
        raise DimensionError(f"embedding matrix needs rows >= 1 and cols >= 1, got {rows}x{cols}")
    if rows > 0xFFFFFFFF or cols > 0xFFFFFFFF:
        raise DimensionError(f"dimensions {rows}x{cols} exceed the u32 header range")
    out = np.ascontiguousarray(matrix, dtype=np.float32)
    for start in range(0, rows, _IO_CHUNK_ROWS):
        block = out[start : start + _IO_CHUNK_ROWS]
        if not np.isfinite(block).all():
            raise NonFiniteValueError("embedding matrix contains NaN or infinite values")
    return out


def write_embedding_stream(matrix: np.ndarray, stream: BinaryIO) -> None:
    """Write a validated matrix to an open binary stream."""
    out = _validate_matrix(matrix)
    rows, cols = out.shape
    stream.write(EMBEDDING_MAGIC)
    stream.write(struct.pack("<II", rows, cols))
    le = out if out.dtype.byteorder in ("<", "=") and np.little_endian else out.astype("<f4")
    for start in range(0, rows, _IO_CHUNK_ROWS):
        stream.write(le[start : start + _IO_CHUNK_ROWS].tobytes())


def read_embedding_stream(stream: BinaryIO, *, expected_bytes: int | None = None) -> np.ndarray:
    """Read one embedding block from an open binary stream.

    ``expected_bytes`` is the number of bytes known to remain (from the file
    size); when given, short payloads are reported before any allocation.
    """
    header = stream.read(16)
    if len(header) < 8 or header[:8] != EMBEDDING_MAGIC:
        raise BadMagicError("not an embedding file: bad magic header")
    if len(header) < 16:
        raise TruncatedPayloadError("embedding header truncated")
    rows, cols = struct.unpack("<II", header[8:16])
    if rows < 1 or cols < 1:
        raise DimensionError(f"embedding header declares {rows}x{cols}; both must be >= 1")
    count = rows * cols
    if count > _MAX_ELEMENTS:
        raise DimensionError(f"embedding header declares {rows}x{cols}: dimension overflow")
    payload = count * 4
    if expected_bytes is not None and expected_bytes - 16 < payload:
        raise TruncatedPayloadError(
            f"payload holds {(expected_bytes - 16) // 4} floats, header promises {count}"
        )
    data = np.empty(count, dtype=np.float32)
    filled = 0
    while filled < count:
        n = min(_IO_CHUNK_ROWS * max(cols, 1024), count - filled)
        raw = stream.read(n * 4)
        if len(raw) < n * 4:
            raise TruncatedPayloadError(
                f"payload holds {filled + len(raw) // 4} floats, header promises {count}"
            )
        data[filled : filled + n] = np.frombuffer(raw, dtype="<f4")
        filled += n
    matrix = data.reshape(rows, cols)
    for start in range(0, rows, _IO_CHUNK_ROWS):
        if not np.isfinite(matrix[start : start + _IO_CHUNK_ROWS]).all():
            raise NonFiniteValueError("embedding payload contains NaN or infinite values")
    return matrix


def _atomic_writer(path: str | os.PathLike):
    """Context manager yielding a temp-file stream that renames on success."""

    class _Writer:
        def __enter__(self):
            self.tmp = f"{os.fspath(path)}.tmp.{os.getpid()}"
            self.stream = open(self.tmp, "wb")
            return self.stream

        def __exit__(self, exc_type, exc, tb):
            self.stream.close()
            if exc_type is None:
                os.replace(self.tmp, path)
            else:
                try:
                    os.unlink(self.tmp)
                except OSError:
                    pass
            return False

    return _Writer()


def write_embedding(matrix: np.ndarray, path: str | os.PathLike) -> None:
    """Write a matrix to ``path`` in the binary embedding format."""
    with _atomic_writer(path) as f:
        write_embedding_stream(matrix, f)


def read_embedding(path: str | os.PathLike) -> np.ndarray:
    """Load an embedding matrix, rejecting malformed or non-finite files."""
    size = os.stat(path).st_size
    with open(path, "rb") as f:
        matrix = read_embedding_stream(f, expected_bytes=size)
        if f.read(1):
            raise FormatError(f"{path}: trailing data after embedding payload")
    return matrix


def read_vocabulary(path: str | os.PathLike) -> Vocabulary:
    """Load a vocabulary from a JSON array of strings."""
    try:
        with open(path, encoding="utf-8") as f:
            entries = json.load(f)
    except UnicodeDecodeError as exc:
        raise VocabularyError(f"{path}: not valid UTF-8: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise VocabularyError(f"{path}: malformed JSON: {exc}") from exc
    if not isinstance(entries, list):
        raise VocabularyError(f"{path}: expected a JSON array of strings")
    try:
        return Vocabulary.from_tokens(entries)
    except VocabularyError as exc:
        raise VocabularyError(f"{path}: {exc}") from exc


def write_vocabulary(vocab: Vocabulary, path: str | os.PathLike) -> None:
    """Write a vocabulary as a UTF-8 JSON array of strings."""
    with _atomic_writer(path) as f:
        f.write(json.dumps(vocab.tokens, ensure_ascii=False).encode("utf-8"))


def row_stats(matrix: np.ndarray, row_subset: Sequence[int] | None = None) -> RowStats:
    """Per-dimension mean and population std over selected rows.

    Accumulates in float64; the full-matrix path streams over row chunks so
    no float64 copy of the whole matrix is ever materialized.
    """
    if row_subset is not None:
        ids = np.asarray(list(row_subset), dtype=np.intp)
        if ids.size == 0:
            raise ValueError("row_subset must be non-empty")
        sel = matrix[ids]
        mean = np.mean(sel, axis=0, dtype=np.float64)
        std = np.std(sel.astype(np.float64, copy=False), axis=0, ddof=0)
        return RowStats(mean=mean, std=std)

    rows, cols = matrix.shape
    total = np.zeros(cols, dtype=np.float64)
    for start in range(0, rows, _IO_CHUNK_ROWS):
        total += matrix[start : start + _IO_CHUNK_ROWS].sum(axis=0, dtype=np.float64)
    mean = total / rows
    sq = np.zeros(cols, dtype=np.float64)
    for start in range(0, rows, _IO_CHUNK_ROWS):
        dev = matrix[start : start + _IO_CHUNK_ROWS].astype(np.float64) - mean
        sq += np.einsum("ij,ij->j", dev, dev)
    return RowStats(mean=mean, std=np.sqrt(sq / rows))


def write_id_stream(samples: Sequence[Sequence[int]], path: str | os.PathLike) -> None:
    """Write pre-tokenized samples as a binary id stream."""
    arrays = [np.asarray(s, dtype=np.int64) for s in samples]
    for i, a in enumerate(arrays):
        if a.size and (a.min() < 0 or a.max() > 0xFFFFFFFF):
            raise ValueError(f"sample {i} has ids outside the u32 range")
    with _atomic_writer(path) as f:
        f.write(IDSTREAM_MAGIC)
        f.write(struct.pack("<I", len(arrays)))
        lengths = np.array([a.size for a in arrays], dtype="<u4")
        f.write(lengths.tobytes())
        for a in arrays:
            f.write(a.astype("<u4").tobytes())


def read_id_stream(path: str | os.PathLike) -> list[np.ndarray]:
    """Read a binary id stream back as one uint32 array per sample."""
    size = os.stat(path).st_size
    with open(path, "rb") as f:
        header = f.read(12)
        if len(header) < 8 or header[:8] != IDSTREAM_MAGIC:
            raise BadMagicError(f"{path}: not an id-stream file")
        if len(header) < 12:
            raise TruncatedPayloadError(f"{path}: id-stream header truncated")
        (count,) = struct.unpack("<I", header[8:12])
        raw = f.read(count * 4)
        if len(raw) < count * 4:
            raise TruncatedPayloadError(f"{path}: length table truncated")
        lengths = np.frombuffer(raw, dtype="<u4")
        total = int(lengths.sum())
        if size - 12 - count * 4 < total * 4:
            raise TruncatedPayloadError(f"{path}: id payload truncated")
        raw = f.read(total * 4)
        ids = np.frombuffer(raw, dtype="<u4")
        if f.read(1):
            raise FormatError(f"{path}: trailing data after id payload")
    out = []
    offset = 0
    for n in lengths:
        out.append(np.array(ids[offset : offset + n], dtype=np.uint32))
        offset += int(n)
    return out
