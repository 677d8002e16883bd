"""Cosine similarity scoring and sparsemax selection of nearest shared tokens.

The selection weight vector is the Euclidean projection of the raw cosine
scores onto the probability simplex, so most candidates get exactly zero
weight and the support size adapts per token.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import NoCandidatesError

# Sentinel for candidates that cannot be scored (no auxiliary vector or a
# zero-norm one); -inf sorts last and always projects to weight zero.
MASKED_SCORE = -np.inf


@dataclass(frozen=True)
class SimilaritySet:
    """Similarity scores of one target token against shared-pair candidates."""

    target_id: int
    candidates: list[tuple[int, float]]


@dataclass(frozen=True)
class NearestSet:
    """Sparsemax-selected candidates with their strictly positive weights."""

    target_id: int
    members: list[tuple[int, float]]

    def validate(self) -> None:
        if not self.members:
            raise ValueError("nearest set must be non-empty")
        weights = np.array([w for _, w in self.members])
        if (weights <= 0).any():
            raise ValueError("nearest-set weights must be strictly positive")
        if abs(weights.sum() - 1.0) > 1e-6:
            raise ValueError(f"nearest-set weights sum to {weights.sum()}, expected 1")


def cosine_similarities(query: np.ndarray, shared_aux: np.ndarray) -> np.ndarray:
    """Cosine of the query against every row, with 64-bit accumulation.

    Zero-norm rows score ``-inf`` so they never survive sparsemax.
    """
    q = np.asarray(query, dtype=np.float64)
    rows = np.asarray(shared_aux, dtype=np.float64)
    if q.ndim != 1 or rows.ndim != 2 or rows.shape[1] != q.shape[0]:
        raise ValueError(f"dimension mismatch: query {q.shape}, rows {rows.shape}")
    qnorm = np.sqrt(q @ q)
    if qnorm == 0.0:
        raise ValueError("query vector has zero norm")
    norms = np.sqrt(np.einsum("ij,ij->i", rows, rows))
    scores = rows @ (q / qnorm)
    np.divide(scores, norms, out=scores, where=norms > 0)
    scores[norms == 0] = MASKED_SCORE
    return scores


def _sparsemax_block(scores: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise simplex projection of a 2-D block.

    ``-inf`` entries are allowed and always project to zero. Returns the
    weight block and the per-row support size; rows whose entries are all
    masked get support size 0 and an all-zero weight row.
    """
    n = scores.shape[1]
    z = -np.sort(-scores, axis=1)
    cssv = np.cumsum(z, axis=1)
    k = np.arange(1, n + 1, dtype=np.float64)
    support = np.count_nonzero(1.0 + k * z > cssv, axis=1)
    weights = np.zeros_like(scores)
    ok = support > 0
    if ok.all():
        tau = (cssv[np.arange(len(support)), support - 1] - 1.0) / support
        np.maximum(scores - tau[:, None], 0.0, out=weights)
    elif ok.any():
        idx = np.flatnonzero(ok)
        tau = (cssv[idx, support[idx] - 1] - 1.0) / support[idx]
        weights[idx] = np.maximum(scores[idx] - tau[:, None], 0.0)
    return weights, support


def sparsemax(scores: Sequence[float] | np.ndarray) -> np.ndarray:
    """Project a score vector onto the probability simplex.

    Sorting descending as z(1) >= ... >= z(n), the support size is the
    largest k with 1 + k*z(k) > sum of the top k, the threshold is
    (top-k sum - 1) / k, and each weight is max(score - threshold, 0).
    """
    z = np.asarray(scores, dtype=np.float64)
    if z.ndim != 1 or z.size == 0:
        raise ValueError("scores must be a non-empty 1-D vector")
    if not np.isfinite(z).all():
        raise ValueError("scores must be finite")
    weights, _ = _sparsemax_block(z[None, :])
    return weights[0]


def select_nearest(simset: SimilaritySet) -> NearestSet:
    """Sparsemax the candidate scores and keep the strictly positive members."""
    if not simset.candidates:
        raise NoCandidatesError(f"target {simset.target_id} has no scored candidates")
    scores = np.array([s for _, s in simset.candidates], dtype=np.float64)
    finite = np.isfinite(scores)
    if not finite.any():
        raise NoCandidatesError(f"target {simset.target_id}: all candidates masked")
    masked_scores = np.where(finite, scores, MASKED_SCORE)
    weights, support = _sparsemax_block(masked_scores[None, :])
    members = [
        (simset.candidates[i][0], float(weights[0, i])) for i in np.flatnonzero(weights[0] > 0)
    ]
    result = NearestSet(target_id=simset.target_id, members=members)
    result.validate()
    return result


def nearest_sets_blocked(
    queries: np.ndarray,
    query_ids: Sequence[int],
    candidate_aux: np.ndarray,
    candidate_valid: np.ndarray | None = None,
    block_size: int = 1024,
) -> Iterator[NearestSet | int]:
    """Yield a NearestSet per query, or the bare query id when nothing scores.

    Scores one block of L2-normalized queries at a time against the
    normalized candidate matrix, bounding memory at block_size x candidates.
    Per-row results do not depend on the block size.
    """
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    cand = np.asarray(candidate_aux, dtype=np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", cand, cand))
    usable = norms > 0
    if candidate_valid is not None:
        usable &= np.asarray(candidate_valid, dtype=bool)
    cand = np.where(usable[:, None], cand / np.where(norms == 0, 1.0, norms)[:, None], 0.0)
    masked = ~usable

    ids = np.asarray(query_ids)
    queries = np.asarray(queries, dtype=np.float64)
    for start in range(0, len(ids), block_size):
        block = queries[start : start + block_size]
        block_ids = ids[start : start + block_size]
        qnorms = np.sqrt(np.einsum("ij,ij->i", block, block))
        zero_q = qnorms == 0
        scores = (block / np.where(zero_q, 1.0, qnorms)[:, None]) @ cand.T
        scores[:, masked] = MASKED_SCORE
        scores[zero_q, :] = MASKED_SCORE
        weights, support = _sparsemax_block(scores)
        for r in range(len(block_ids)):
            tid = int(block_ids[r])
            if support[r] == 0:
                yield tid
                continue
            cols = np.flatnonzero(weights[r] > 0)
            yield NearestSet(
                target_id=tid, members=[(int(c), float(weights[r, c])) for c in cols]
            )
