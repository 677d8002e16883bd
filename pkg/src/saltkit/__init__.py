"""Vocabulary embedding transplant toolkit.

Moves a target tokenizer's vocabulary into a source model's embedding
space: shared tokens are copied, the rest are projected through per-token
least-squares maps fit on semantically nearest shared tokens, with
weighted-mean and Gaussian-sampling baselines for comparison.
"""

from .auxembed import (
    AuxiliaryEmbeddings,
    SubwordBundle,
    load_auxiliary,
    load_subword_bundle,
    load_vec_text,
    ngram_hash,
    write_subword_bundle,
    write_vec_text,
)
from .baselines import focus_transfer, multivariate_transfer
from .overlap import (
    NormalizationRules,
    OverlapMap,
    compute_overlap,
    coverage_report,
    normalize_token,
)
from .simsearch import (
    NearestSet,
    SimilaritySet,
    cosine_similarities,
    select_nearest,
    sparsemax,
)
from .tensorio import (
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
from .transfer import (
    TokenTransform,
    TransferConfig,
    TransferReport,
    fallback_init,
    make_head,
    salt_transfer,
    solve_token_transform,
    transfer_pipeline,
)
from .validate import (
    SyntheticInstance,
    SyntheticSpec,
    evaluate_methods,
    footprint_report,
    generate_instance,
    recovery_errors,
)

__version__ = "0.1.0"
