"""Auxiliary static word vectors with subword n-gram composition.

The word table comes from the standard text format ("count dim" header,
then one word plus ``dim`` floats per line). Tokens missing from the table
can still get a vector when a subword bundle is attached: the bundle holds
a bucketed n-gram matrix and the vector is the mean of the hashed n-gram
rows, matching the fastText composition convention.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import FormatError, VectorTableError
from .overlap import NormalizationRules, normalize_token
from .tensorio import read_embedding_stream, write_embedding_stream, _atomic_writer

log = logging.getLogger(__name__)

FNV_OFFSET_BASIS = 2166136261
FNV_PRIME = 16777619


@dataclass(frozen=True)
class SubwordBundle:
    """Bucketed character n-gram matrix for out-of-table composition."""

    ngram_matrix: np.ndarray
    bucket_count: int
    minn: int
    maxn: int

    def __post_init__(self):
        if not (1 <= self.minn <= self.maxn):
            raise ValueError(f"need 1 <= minn <= maxn, got minn={self.minn} maxn={self.maxn}")
        if self.bucket_count < 1:
            raise ValueError("bucket_count must be positive")
        if self.ngram_matrix.shape[0] != self.bucket_count:
            raise ValueError(
                f"ngram matrix has {self.ngram_matrix.shape[0]} rows, "
                f"bucket_count says {self.bucket_count}"
            )


def ngram_hash(ngram: bytes, bucket_count: int) -> int:
    """FNV-1a 32-bit hash of the n-gram bytes, reduced modulo bucket_count."""
    h = FNV_OFFSET_BASIS
    for b in ngram:
        h = ((h ^ b) * FNV_PRIME) & 0xFFFFFFFF
    return h % bucket_count


@dataclass(frozen=True)
class AuxiliaryEmbeddings:
    """Static word-vector store, optionally backed by a subword bundle.

    Read-only after load; safe for concurrent lookups.
    """

    dim: int
    vectors: np.ndarray
    word_index: dict[str, int]
    subwords: SubwordBundle | None = None
    duplicates_skipped: int = 0

    def word_vector(self, word: str) -> np.ndarray | None:
        i = self.word_index.get(word)
        return None if i is None else self.vectors[i]

    def with_subwords(self, bundle: SubwordBundle) -> "AuxiliaryEmbeddings":
        if bundle.ngram_matrix.shape[1] != self.dim:
            raise FormatError(
                f"bundle dimension {bundle.ngram_matrix.shape[1]} != word table dim {self.dim}"
            )
        return AuxiliaryEmbeddings(
            dim=self.dim,
            vectors=self.vectors,
            word_index=self.word_index,
            subwords=bundle,
            duplicates_skipped=self.duplicates_skipped,
        )

    def compose_subword(self, word: str) -> np.ndarray | None:
        """Mean of the hashed n-gram rows for ``<word>``; None if no n-gram fits.

        N-grams run over UTF-8 character boundaries of the wrapped form;
        each one is hashed over its UTF-8 bytes.
        """
        if self.subwords is None:
            raise ValueError("no subword bundle loaded")
        bundle = self.subwords
        wrapped = f"<{word}>"
        buckets = [
            ngram_hash(wrapped[i : i + n].encode("utf-8"), bundle.bucket_count)
            for n in range(bundle.minn, bundle.maxn + 1)
            for i in range(len(wrapped) - n + 1)
        ]
        if not buckets:
            return None
        total = np.zeros(self.dim, dtype=np.float64)
        for b in buckets:
            total += bundle.ngram_matrix[b]
        return (total / len(buckets)).astype(np.float32)

    def lookup(self, token: str, rules: NormalizationRules) -> np.ndarray | None:
        """Vector for a raw token: exact, then lowercase, then subword composition.

        The token is normalized first; empty normal forms have no vector.
        """
        word = normalize_token(token, rules)
        if not word:
            return None
        vec = self.word_vector(word)
        if vec is not None:
            return vec
        vec = self.word_vector(word.lower())
        if vec is not None:
            return vec
        if self.subwords is not None:
            return self.compose_subword(word)
        return None


def load_vec_text(path: str | os.PathLike) -> AuxiliaryEmbeddings:
    """Load a word-vector text file ("count dim" header, one word per line).

    Duplicate words keep the first occurrence and are counted; lines whose
    float count differs from the header dimension, or that contain
    non-finite values, are rejected with their line number.
    """
    with open(path, encoding="utf-8") as f:
        header = f.readline()
        parts = header.split()
        if len(parts) != 2:
            raise VectorTableError(f"{path}:1: header must be 'count dim', got {header!r}")
        try:
            declared, dim = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise VectorTableError(f"{path}:1: header must be 'count dim'") from exc
        if dim < 1:
            raise VectorTableError(f"{path}:1: dimension must be >= 1")

        words: dict[str, int] = {}
        rows: list[np.ndarray] = []
        duplicates = 0
        for lineno, line in enumerate(f, start=2):
            fields = line.split()
            if not fields:
                continue
            if len(fields) - 1 != dim:
                raise VectorTableError(
                    f"{path}:{lineno}: expected {dim} floats, got {len(fields) - 1}"
                )
            word = fields[0]
            if word in words:
                duplicates += 1
                continue
            try:
                vec = np.asarray(fields[1:], dtype=np.float32)
            except ValueError as exc:
                raise VectorTableError(f"{path}:{lineno}: bad float value") from exc
            if not np.isfinite(vec).all():
                raise VectorTableError(f"{path}:{lineno}: non-finite vector value")
            words[word] = len(rows)
            rows.append(vec)
    if duplicates:
        log.warning("%s: skipped %d duplicate word(s), first occurrence kept", path, duplicates)
    if declared != len(rows) + duplicates:
        log.warning("%s: header declares %d words, parsed %d", path, declared, len(rows) + duplicates)
    vectors = np.vstack(rows) if rows else np.empty((0, dim), dtype=np.float32)
    return AuxiliaryEmbeddings(
        dim=dim, vectors=vectors, word_index=words, duplicates_skipped=duplicates
    )


def write_vec_text(
    entries: Sequence[tuple[str, np.ndarray]], path: str | os.PathLike
) -> None:
    """Write (word, vector) pairs in the word-vector text format.

    Floats are printed with 9 significant digits so float32 values
    round-trip exactly through the text form.
    """
    if not entries:
        raise ValueError("cannot write an empty word-vector table")
    dim = len(entries[0][1])
    with _atomic_writer(path) as f:
        f.write(f"{len(entries)} {dim}\n".encode("utf-8"))
        for word, vec in entries:
            if len(vec) != dim:
                raise ValueError(f"vector for {word!r} has length {len(vec)}, expected {dim}")
            values = " ".join(f"{float(x):.9g}" for x in vec)
            f.write(f"{word} {values}\n".encode("utf-8"))


def load_subword_bundle(path: str | os.PathLike) -> SubwordBundle:
    """Load a subword bundle: one JSON metadata line, then a matrix block."""
    size = os.stat(path).st_size
    with open(path, "rb") as f:
        meta_line = f.readline()
        try:
            meta = json.loads(meta_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"{path}: bad bundle metadata line: {exc}") from exc
        if not isinstance(meta, dict) or set(meta) != {"bucket_count", "minn", "maxn"}:
            raise FormatError(f"{path}: metadata must be exactly {{bucket_count, minn, maxn}}")
        matrix = read_embedding_stream(f, expected_bytes=size - len(meta_line))
        if f.read(1):
            raise FormatError(f"{path}: trailing data after bundle matrix")
    try:
        bundle = SubwordBundle(
            ngram_matrix=matrix,
            bucket_count=int(meta["bucket_count"]),
            minn=int(meta["minn"]),
            maxn=int(meta["maxn"]),
        )
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return bundle


def write_subword_bundle(bundle: SubwordBundle, path: str | os.PathLike) -> None:
    """Write a bundle as a JSON metadata line followed by a matrix block."""
    meta = {"bucket_count": bundle.bucket_count, "minn": bundle.minn, "maxn": bundle.maxn}
    with _atomic_writer(path) as f:
        f.write((json.dumps(meta) + "\n").encode("utf-8"))
        write_embedding_stream(bundle.ngram_matrix, f)


def load_auxiliary(
    vec_path: str | os.PathLike, bundle_path: str | os.PathLike | None = None
) -> AuxiliaryEmbeddings:
    """Load the word table and, when given, attach a subword bundle."""
    store = load_vec_text(vec_path)
    if bundle_path is not None:
        store = store.with_subwords(load_subword_bundle(bundle_path))
    return store
