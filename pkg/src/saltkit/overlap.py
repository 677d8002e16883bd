"""Token normalization across tokenizer conventions and shared-vocabulary matching.

Different tokenizer families mark word boundaries differently (byte-level BPE
prefixes whitespace with "Ġ", SentencePiece with "▁", WordPiece marks
continuations with "##"). Matching strips those markers and surrounding
whitespace so the same surface form lines up across vocabularies.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

from .tensorio import Vocabulary

DEFAULT_MARKERS = ("Ġ", "▁", "##")


@dataclass(frozen=True)
class NormalizationRules:
    """Controls how raw tokens are reduced to a comparable surface form.

    ``strip_markers`` are removed at any position, in list order, repeatedly
    until no occurrence remains (so normalization is idempotent for any
    marker set). ``byte_level_decode`` first maps byte-level BPE printable
    characters back to raw bytes.
    """

    strip_markers: tuple[str, ...] = DEFAULT_MARKERS
    trim_whitespace: bool = True
    byte_level_decode: bool = False

    def __post_init__(self):
        for m in self.strip_markers:
            if not m:
                raise ValueError("markers must be non-empty strings")


@dataclass(frozen=True)
class OverlapMap:
    """Matched (target_id, source_id) pairs plus the unmatched target ids.

    Every target id appears exactly once across ``pairs`` and
    ``nonshared_target``; no source id repeats in ``pairs``.
    """

    pairs: list[tuple[int, int]]
    nonshared_target: list[int]
    collisions: int = 0

    def validate(self, vt_size: int) -> None:
        seen_t = [t for t, _ in self.pairs] + list(self.nonshared_target)
        if sorted(seen_t) != list(range(vt_size)):
            raise ValueError("pairs and nonshared_target do not partition the target ids")
        sources = [s for _, s in self.pairs]
        if len(set(sources)) != len(sources):
            raise ValueError("a source id appears in more than one pair")


@functools.lru_cache(maxsize=1)
def _byte_decoder() -> dict[str, int]:
    # Inverse of the byte-level BPE printable mapping: printable ASCII and
    # Latin-1 ranges map to themselves, remaining bytes to 256 + offset.
    printable = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(ord("¡"), ord("¬") + 1))
        + list(range(ord("®"), ord("ÿ") + 1))
    )
    chars = printable[:]
    n = 0
    for b in range(256):
        if b not in printable:
            chars.append(256 + n)
            n += 1
    byte_values = printable + [b for b in range(256) if b not in printable]
    return {chr(c): b for c, b in zip(chars, byte_values)}


def _decode_byte_level(token: str) -> str:
    decoder = _byte_decoder()
    buf = bytearray()
    for ch in token:
        b = decoder.get(ch)
        if b is None:
            buf.extend(ch.encode("utf-8"))
        else:
            buf.append(b)
    return buf.decode("utf-8", errors="replace")


def normalize_token(token: str, rules: NormalizationRules) -> str:
    """Reduce a raw token to its comparable surface form.

    Returns the empty string for marker-only or whitespace-only tokens;
    callers treat those as unmatched.
    """
    s = token
    if rules.byte_level_decode:
        s = _decode_byte_level(s)
    while True:
        before = s
        for marker in rules.strip_markers:
            s = s.replace(marker, "")
        if s == before:
            break
    if rules.trim_whitespace:
        s = s.strip()
    return s


def compute_overlap(vs: Vocabulary, vt: Vocabulary, rules: NormalizationRules) -> OverlapMap:
    """Match target tokens to source tokens by equal, non-empty normalized form.

    Each source token is consumed by at most one target token. Targets are
    processed in ascending id order; when several unconsumed source tokens
    share a normalized form, a raw-string exact match to the target token
    wins, then the lowest source id. ``collisions`` counts matches where
    more than one candidate was available.
    """
    by_form: dict[str, list[int]] = {}
    for sid, token in enumerate(vs.tokens):
        form = normalize_token(token, rules)
        if form:
            by_form.setdefault(form, []).append(sid)

    pairs: list[tuple[int, int]] = []
    nonshared: list[int] = []
    collisions = 0
    consumed: set[int] = set()
    for tid, token in enumerate(vt.tokens):
        form = normalize_token(token, rules)
        candidates = by_form.get(form) if form else None
        available = [sid for sid in candidates if sid not in consumed] if candidates else []
        if not available:
            nonshared.append(tid)
            continue
        if len(available) > 1:
            collisions += 1
            chosen = next((sid for sid in available if vs.tokens[sid] == token), available[0])
        else:
            chosen = available[0]
        consumed.add(chosen)
        pairs.append((tid, chosen))
    return OverlapMap(pairs=pairs, nonshared_target=nonshared, collisions=collisions)


def coverage_report(overlap_map: OverlapMap, vt_size: int) -> dict:
    """Coverage ratio plus shared/non-shared/collision counts as a JSON-able dict."""
    shared = len(overlap_map.pairs)
    nonshared = len(overlap_map.nonshared_target)
    if shared + nonshared != vt_size:
        raise ValueError(f"overlap map covers {shared + nonshared} ids, expected {vt_size}")
    return {
        "coverage": shared / vt_size,
        "shared": shared,
        "nonshared": nonshared,
        "collisions": overlap_map.collisions,
    }
