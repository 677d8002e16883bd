"""Reference initializers for comparison runs.

Both baselines copy shared-token rows exactly like the least-squares
transfer; they differ only in how non-shared rows are produced. The
weighted-mean baseline builds each row as a convex combination of source
rows over the same sparsemax nearest set; the multivariate baseline samples
every non-shared row from per-dimension source statistics, sharing the
exact sampler used for fallback rows.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .auxembed import AuxiliaryEmbeddings
from .overlap import NormalizationRules
from .tensorio import Vocabulary
from .transfer import TransferConfig, TransferReport, transfer_pipeline


def focus_transfer(
    source_embedding: np.ndarray,
    source_vocab: Vocabulary,
    target_vocab: Vocabulary,
    aux: AuxiliaryEmbeddings,
    rules: NormalizationRules | None = None,
    config: TransferConfig | None = None,
    *,
    threads: int = 1,
    block_size: int = 1024,
) -> tuple[np.ndarray, TransferReport]:
    """Sparsemax-weighted mean of source rows; needs no target embedding."""
    cfg = config if config is not None else TransferConfig(method="focus")
    if cfg.method != "focus":
        cfg = dataclasses.replace(cfg, method="focus")
    out, report, _ = transfer_pipeline(
        source_embedding, source_vocab, target_vocab, cfg,
        aux=aux, rules=rules, threads=threads, block_size=block_size,
    )
    return out, report


def multivariate_transfer(
    source_embedding: np.ndarray,
    source_vocab: Vocabulary,
    target_vocab: Vocabulary,
    rules: NormalizationRules | None = None,
    config: TransferConfig | None = None,
    *,
    threads: int = 1,
    block_size: int = 1024,
) -> tuple[np.ndarray, TransferReport]:
    """Per-dimension Gaussian sampling from source statistics for non-shared rows."""
    cfg = config if config is not None else TransferConfig(method="multivariate")
    if cfg.method != "multivariate":
        cfg = dataclasses.replace(cfg, method="multivariate")
    out, report, _ = transfer_pipeline(
        source_embedding, source_vocab, target_vocab, cfg,
        rules=rules, threads=threads, block_size=block_size,
    )
    return out, report
