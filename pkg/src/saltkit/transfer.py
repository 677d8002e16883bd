"""Per-token least-squares transfer of vocabulary embeddings.

Shared tokens are copied verbatim from the source matrix. Each remaining
target token gets its own linear map, fit over the paired source/target
embeddings of its sparsemax-selected nearest shared tokens, and its target
embedding is projected through that map into the source space. Tokens with
no usable candidates fall back to per-dimension normal sampling from the
source matrix statistics.
"""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .auxembed import AuxiliaryEmbeddings
from .overlap import NormalizationRules, OverlapMap, compute_overlap
from .simsearch import nearest_sets_blocked
from .tensorio import RowStats, Vocabulary, row_stats

log = logging.getLogger(__name__)

METHODS = ("salt", "focus", "multivariate")


@dataclass(frozen=True)
class TransferConfig:
    """Knobs shared by every transfer method."""

    method: str = "salt"
    seed: int = 0
    rcond: float = 1e-6
    tied_head: bool = True
    min_pairs: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if self.rcond <= 0:
            raise ValueError("rcond must be > 0")
        if self.min_pairs < 1:
            raise ValueError("min_pairs must be >= 1")


@dataclass(frozen=True)
class TokenTransform:
    """One token's fitted linear map and its fit quality."""

    target_id: int
    matrix: np.ndarray
    residual: float
    pair_count: int


@dataclass
class TransferReport:
    """Per-run accounting; copied + solved + fallback always equals |V_t|."""

    copied: int
    solved: int
    fallback: int
    residual_mean: float
    residual_max: float
    coverage: float
    collisions: int = 0
    method: str = ""

    def validate(self, vt_size: int) -> None:
        total = self.copied + self.solved + self.fallback
        if total != vt_size:
            raise ValueError(f"report counts sum to {total}, expected {vt_size}")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "copied": self.copied,
            "solved": self.solved,
            "fallback": self.fallback,
            "residual_mean": self.residual_mean,
            "residual_max": self.residual_max,
            "coverage": self.coverage,
            "collisions": self.collisions,
        }


def solve_token_transform(
    et_pairs: np.ndarray,
    es_pairs: np.ndarray,
    rcond: float = 1e-6,
    target_id: int = -1,
) -> TokenTransform:
    """Minimum-norm least-squares map from stacked target rows to source rows.

    The solution is the SVD pseudo-inverse product: singular values at or
    below ``rcond`` times the largest are dropped, and among all minimizers
    of the Frobenius misfit the returned matrix has minimum norm.
    """
    a = np.asarray(et_pairs, dtype=np.float64)
    b = np.asarray(es_pairs, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0] or a.shape[0] < 1:
        raise ValueError(f"need matching k x h matrices, got {a.shape} and {b.shape}")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValueError("pair matrices must be finite")
    x, _, _, _ = np.linalg.lstsq(a, b, rcond=rcond)
    residual = float(np.linalg.norm(a @ x - b))
    return TokenTransform(target_id=target_id, matrix=x, residual=residual, pair_count=a.shape[0])


def _token_generator(seed: int, token_id: int) -> np.random.Generator:
    # Counter-based generator keyed per token: values depend only on
    # (seed, token_id, dimension), never on evaluation order.
    key = np.array([seed, token_id], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def fallback_init(token_ids: Sequence[int], stats: RowStats, seed: int) -> np.ndarray:
    """Normal rows with the source per-dimension mean/std, keyed per token."""
    cols = stats.mean.shape[0]
    rows = np.empty((len(token_ids), cols), dtype=np.float32)
    for i, tid in enumerate(token_ids):
        z = _token_generator(seed, int(tid)).standard_normal(cols)
        rows[i] = stats.mean + stats.std * z
    return rows


def _projected_row(et_row, et_pairs, es_pairs, rcond):
    """Project one target row through its fitted map without materializing it.

    Equal to ``et_row @ X`` in exact arithmetic; the k-dimensional
    intermediate keeps per-token cost at O(k^2 * h) instead of O(h^2 * k).
    """
    pinv = np.linalg.pinv(et_pairs, rcond=rcond)
    row = (et_row @ pinv) @ es_pairs
    fit = (et_pairs @ pinv) @ es_pairs
    residual = float(np.linalg.norm(fit - es_pairs))
    return row, residual


def transfer_pipeline(
    source_embedding: np.ndarray,
    source_vocab: Vocabulary,
    target_vocab: Vocabulary,
    config: TransferConfig,
    *,
    target_embedding: np.ndarray | None = None,
    aux: AuxiliaryEmbeddings | None = None,
    rules: NormalizationRules | None = None,
    threads: int = 1,
    block_size: int = 1024,
) -> tuple[np.ndarray, TransferReport, OverlapMap]:
    """Shared driver for all three methods.

    Returns the transferred matrix (|V_t| rows, source width), the run
    report, and the overlap map it was built from. Results are identical
    for any ``threads`` or ``block_size``.
    """
    if source_embedding.shape[0] != len(source_vocab):
        raise ValueError(
            f"source embedding has {source_embedding.shape[0]} rows, "
            f"vocabulary has {len(source_vocab)}"
        )
    rules = rules if rules is not None else NormalizationRules()
    if threads < 1:
        raise ValueError("threads must be >= 1")

    method = config.method
    if method == "salt":
        if target_embedding is None:
            raise ValueError("salt transfer requires the target embedding matrix")
        if target_embedding.shape[0] != len(target_vocab):
            raise ValueError(
                f"target embedding has {target_embedding.shape[0]} rows, "
                f"vocabulary has {len(target_vocab)}"
            )
    if method in ("salt", "focus") and aux is None:
        raise ValueError(f"{method} transfer requires auxiliary embeddings")

    overlap_map = compute_overlap(source_vocab, target_vocab, rules)
    n_targets = len(target_vocab)
    out = np.empty((n_targets, source_embedding.shape[1]), dtype=np.float32)

    pair_t = np.fromiter((t for t, _ in overlap_map.pairs), dtype=np.intp, count=len(overlap_map.pairs))
    pair_s = np.fromiter((s for _, s in overlap_map.pairs), dtype=np.intp, count=len(overlap_map.pairs))
    if pair_t.size:
        out[pair_t] = source_embedding[pair_s]

    stats = row_stats(source_embedding)
    nonshared = overlap_map.nonshared_target
    fallback_ids: list[int] = []
    jobs: list[tuple[int, np.ndarray, np.ndarray]] = []

    if method == "multivariate":
        fallback_ids = list(nonshared)
    elif nonshared:
        cand_vecs = np.zeros((pair_t.size, aux.dim), dtype=np.float32)
        cand_valid = np.zeros(pair_t.size, dtype=bool)
        for j, tid in enumerate(pair_t):
            vec = aux.lookup(target_vocab.tokens[tid], rules)
            if vec is not None:
                cand_vecs[j] = vec
                cand_valid[j] = True

        query_ids: list[int] = []
        query_rows: list[np.ndarray] = []
        for tid in nonshared:
            vec = aux.lookup(target_vocab.tokens[tid], rules)
            if vec is None:
                fallback_ids.append(tid)
            else:
                query_ids.append(tid)
                query_rows.append(vec)

        queries = (
            np.vstack(query_rows) if query_rows else np.empty((0, aux.dim), dtype=np.float32)
        )
        for item in nearest_sets_blocked(
            queries, query_ids, cand_vecs, cand_valid, block_size=block_size
        ):
            if isinstance(item, int):
                fallback_ids.append(item)
                continue
            if method == "salt" and len(item.members) < config.min_pairs:
                fallback_ids.append(item.target_id)
                continue
            idxs = np.fromiter((m for m, _ in item.members), dtype=np.intp, count=len(item.members))
            weights = np.fromiter((w for _, w in item.members), dtype=np.float64, count=len(item.members))
            jobs.append((item.target_id, idxs, weights))

    residuals = np.zeros(len(jobs))
    if jobs:
        es32 = source_embedding

        if method == "salt":
            et32 = target_embedding

            def run_job(j: int) -> None:
                tid, idxs, _ = jobs[j]
                et_pairs = et32[pair_t[idxs]].astype(np.float64)
                es_pairs = es32[pair_s[idxs]].astype(np.float64)
                row, residual = _projected_row(
                    et32[tid].astype(np.float64), et_pairs, es_pairs, config.rcond
                )
                out[tid] = row
                residuals[j] = residual

        else:

            def run_job(j: int) -> None:
                tid, idxs, weights = jobs[j]
                out[tid] = weights @ es32[pair_s[idxs]].astype(np.float64)

        if threads == 1:
            for j in range(len(jobs)):
                run_job(j)
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(run_job, range(len(jobs)), chunksize=64))

    if fallback_ids:
        fallback_ids.sort()
        out[np.asarray(fallback_ids, dtype=np.intp)] = fallback_init(
            fallback_ids, stats, config.seed
        )

    solved = len(jobs)
    salt_residuals = residuals if method == "salt" and solved else np.zeros(0)
    report = TransferReport(
        copied=len(overlap_map.pairs),
        solved=solved,
        fallback=len(fallback_ids),
        residual_mean=float(salt_residuals.mean()) if salt_residuals.size else 0.0,
        residual_max=float(salt_residuals.max()) if salt_residuals.size else 0.0,
        coverage=len(overlap_map.pairs) / n_targets,
        collisions=overlap_map.collisions,
        method=method,
    )
    report.validate(n_targets)
    return out, report, overlap_map


def salt_transfer(
    source_embedding: np.ndarray,
    source_vocab: Vocabulary,
    target_embedding: np.ndarray,
    target_vocab: Vocabulary,
    aux: AuxiliaryEmbeddings,
    rules: NormalizationRules | None = None,
    config: TransferConfig | None = None,
    *,
    threads: int = 1,
    block_size: int = 1024,
) -> tuple[np.ndarray, TransferReport]:
    """Full semantic least-squares transfer into the source embedding space."""
    cfg = config if config is not None else TransferConfig(method="salt")
    if cfg.method != "salt":
        cfg = dataclasses.replace(cfg, method="salt")
    out, report, _ = transfer_pipeline(
        source_embedding, source_vocab, target_vocab, cfg,
        target_embedding=target_embedding, aux=aux, rules=rules,
        threads=threads, block_size=block_size,
    )
    return out, report


def make_head(
    embedding: np.ndarray,
    head_source: np.ndarray | None = None,
    *,
    config: TransferConfig,
    source_vocab: Vocabulary | None = None,
    target_embedding: np.ndarray | None = None,
    target_vocab: Vocabulary | None = None,
    aux: AuxiliaryEmbeddings | None = None,
    rules: NormalizationRules | None = None,
    threads: int = 1,
    block_size: int = 1024,
) -> np.ndarray:
    """Output-projection matrix for the transferred vocabulary.

    Tied weights: the transpose of the transferred embedding. Untied: the
    transfer pipeline runs again on the supplied head matrix (|V_s| rows)
    and the result is transposed.
    """
    if config.tied_head:
        if head_source is not None:
            log.warning("tied_head is set; ignoring the supplied head_source matrix")
        return np.ascontiguousarray(embedding.T)
    if head_source is None:
        raise ValueError("untied head requires the source model's head matrix")
    if source_vocab is None or target_vocab is None:
        raise ValueError("untied head requires the source and target vocabularies")
    head, _, _ = transfer_pipeline(
        head_source, source_vocab, target_vocab, config,
        target_embedding=target_embedding, aux=aux, rules=rules,
        threads=threads, block_size=block_size,
    )
    return np.ascontiguousarray(head.T)
