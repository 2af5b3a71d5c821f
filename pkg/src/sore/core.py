"""The cleaning pipeline.

For each document: parse into segments, embed metadata and segments in one
batch, pick the top-k fraction of segments nearest the metadata as core
content, then test every other segment against the core anchors and the
prebuilt outlier-phrase index. Segments closer to an outlier phrase than to
the core (and within ``outlier_match_cutoff``) are removed with that phrase's
group as the reason; segments farther than ``distance_cutoff_d`` from every
core anchor are removed as "too irrelevant". If too much text would go, the
removals are rolled back and the result is flagged.
"""

from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from sore import ann
from sore.ann import AnnIndex, PointKind, PointLabel
from sore.errors import DimensionMismatch
from sore.embedder import EmbedderConfig, Provider, embed_texts, make_provider
from sore.groups import OutlierGroup, builtin_groups, flat_phrases
from sore.segmenter import DocumentMetadata, Segment, parse_document

logger = logging.getLogger(__name__)

TOO_IRRELEVANT = "too irrelevant"


class Verdict(str, enum.Enum):
    KEPT_CORE = "kept_core"
    KEPT = "kept"
    REMOVED_OUTLIER = "removed_outlier"
    REMOVED_IRRELEVANT = "removed_irrelevant"
    KEPT_BY_FALLBACK = "kept_by_fallback"

    @property
    def removed(self) -> bool:
        return self in (Verdict.REMOVED_OUTLIER, Verdict.REMOVED_IRRELEVANT)


@dataclass
class AnnConfig:
    M: int = ann.DEFAULT_M
    ef_construction: int = ann.DEFAULT_EF_CONSTRUCTION
    # The per-document population is ~130 phrases plus a few core anchors;
    # searching that wide keeps nearest distances exact at desk scale.
    ef_search: int = 256
    seed: int = 0


@dataclass
class CleanConfig:
    core_fraction_k: float = 0.2
    distance_cutoff_d: float = 0.8
    outlier_match_cutoff: float = 0.25
    max_removal_fraction: float = 0.8
    include_metadata_in_core_anchors: bool = True
    min_segment_chars: int = 3
    split_sentences: bool = False
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    ann: AnnConfig = field(default_factory=AnnConfig)

    def __post_init__(self):
        if not 0.0 < self.core_fraction_k <= 1.0:
            raise ValueError("core_fraction_k must be in (0, 1]")
        if self.distance_cutoff_d < 0.0:
            raise ValueError("distance_cutoff_d must be >= 0")
        if self.outlier_match_cutoff < 0.0:
            raise ValueError("outlier_match_cutoff must be >= 0")
        if not 0.0 < self.max_removal_fraction <= 1.0:
            raise ValueError("max_removal_fraction must be in (0, 1]")
        if self.min_segment_chars < 1:
            raise ValueError("min_segment_chars must be >= 1")

    def replace(self, **changes) -> "CleanConfig":
        from dataclasses import replace
        return replace(self, **changes)


@dataclass(frozen=True)
class RemovalDecision:
    segment_id: int
    verdict: Verdict
    reason: str | None
    d_core: float
    d_outlier: float
    nearest_phrase: str | None = None

    def to_dict(self) -> dict:
        return {
            "segment_id": self.segment_id,
            "verdict": self.verdict.value,
            "reason": self.reason,
            "d_core": self.d_core,
            "d_outlier": self.d_outlier,
            "nearest_phrase": self.nearest_phrase,
        }


@dataclass
class CleanStats:
    n_segments: int
    n_removed: int
    removed_char_fraction: float
    n_flagged: int
    flagged_char_fraction: float
    metadata_anchor: str  # "metadata" or "centroid"
    elapsed_ms: float = 0.0

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {
            "n_segments": self.n_segments,
            "n_removed": self.n_removed,
            "removed_char_fraction": self.removed_char_fraction,
            "n_flagged": self.n_flagged,
            "flagged_char_fraction": self.flagged_char_fraction,
            "metadata_anchor": self.metadata_anchor,
        }
        if include_timing:
            d["elapsed_ms"] = self.elapsed_ms
        return d


@dataclass
class CleanResult:
    metadata: DocumentMetadata
    segments: list[Segment]
    decisions: list[RemovalDecision]
    fallback_applied: bool
    stats: CleanStats

    @property
    def kept_segments(self) -> list[Segment]:
        return [s for s, d in zip(self.segments, self.decisions) if not d.verdict.removed]

    @property
    def cleaned_text(self) -> str:
        return "\n\n".join(s.text for s in self.kept_segments)


@dataclass
class PreparedDocument:
    """Parsed and embedded document; reusable across (k, d) settings."""
    metadata: DocumentMetadata
    segments: list[Segment]
    vectors: np.ndarray  # (n_segments, dim)
    metadata_vector: np.ndarray
    metadata_anchor: str


# core identification

def core_size(n_segments: int, k: float) -> int:
    # round first so float noise like 0.3 * 10 = 3.0000000000000004 does not add a segment
    return min(n_segments, max(1, math.ceil(round(k * n_segments, 9))))


def select_core(segment_vectors: np.ndarray, metadata_vector: np.ndarray, k: float) -> set[int]:
    """Ids of the ``max(1, ceil(k * N))`` segments nearest the metadata vector.

    Ties go to the smaller segment id.
    """
    vecs = np.asarray(segment_vectors, dtype=np.float64)
    if vecs.ndim != 2 or vecs.shape[0] == 0:
        raise ValueError("need at least one segment vector")
    dists = 1.0 - vecs @ np.asarray(metadata_vector, dtype=np.float64)
    order = np.lexsort((np.arange(len(dists)), dists))
    return set(order[: core_size(len(dists), k)].tolist())


# classification

@dataclass(frozen=True)
class Classification:
    verdict: Verdict
    reason: str | None
    d_core: float
    d_outlier: float
    nearest_phrase: str | None


def apply_rule(d_core: float, d_outlier: float, group: str | None, config: CleanConfig) -> tuple[Verdict, str | None]:
    if d_outlier < d_core and d_outlier <= config.outlier_match_cutoff:
        return Verdict.REMOVED_OUTLIER, group
    if d_core > config.distance_cutoff_d:
        return Verdict.REMOVED_IRRELEVANT, TOO_IRRELEVANT
    return Verdict.KEPT, None


def anchor_distances(index: AnnIndex, vector: np.ndarray, ef_search: int) -> tuple[float, PointLabel | None, float, PointLabel | None]:
    """Nearest outlier phrase and nearest core anchor in an augmented index.

    Returns ``(d_outlier, outlier_label, d_core, core_label)``. A population
    the beam did not reach falls back to an exact scan of that population.
    """
    k = min(len(index), ef_search)
    d_out = d_core = math.inf
    out_label = core_label = None
    for label, dist in ann.search(index, vector, k, max(ef_search, k)):
        if label.kind == PointKind.OUTLIER_PHRASE:
            if out_label is None:
                d_out, out_label = dist, label
        elif core_label is None:
            d_core, core_label = dist, label
        if out_label is not None and core_label is not None:
            break
    if out_label is None or core_label is None:
        want_outlier = out_label is None
        q = np.asarray(vector, dtype=np.float64)
        dists = 1.0 - index.vectors.astype(np.float64) @ q
        for node in np.lexsort((np.arange(len(dists)), dists)).tolist():
            label = index.labels[node]
            if (label.kind == PointKind.OUTLIER_PHRASE) == want_outlier:
                if want_outlier:
                    d_out, out_label = float(dists[node]), label
                else:
                    d_core, core_label = float(dists[node]), label
                break
    return d_out, out_label, d_core, core_label


def classify_segment(segment_vector: np.ndarray, anchors: AnnIndex, config: CleanConfig,
                     phrases: Sequence[tuple[str, str]] | None = None) -> Classification:
    """Classify one non-core segment against an index holding both outlier
    phrases and core anchors.

    ``phrases`` maps outlier ``ref_id`` to ``(group, phrase)`` and is only
    used to fill ``nearest_phrase``.
    """
    d_out, out_label, d_core, _ = anchor_distances(anchors, segment_vector, config.ann.ef_search)
    nearest = None
    group = None
    if out_label is not None:
        group = out_label.group_name
        if phrases is not None:
            nearest = phrases[out_label.ref_id][1]
    # distances are clamped: float rounding can push 1 - dot a hair below 0
    d_core = max(d_core, 0.0)
    d_out = max(d_out, 0.0)
    verdict, reason = apply_rule(d_core, d_out, group, config)
    return Classification(verdict, reason, d_core, d_out, nearest)


# outlier index

def build_outlier_index(groups: list[OutlierGroup], config: CleanConfig,
                        provider: Provider | None = None) -> AnnIndex:
    pairs = flat_phrases(groups)
    vecs = embed_texts([p for _, p in pairs], config.embedder, provider)
    points = [(v, PointLabel(PointKind.OUTLIER_PHRASE, i, g)) for i, ((g, _), v) in enumerate(zip(pairs, vecs))]
    return ann.build_index(points, config.ann.M, config.ann.ef_construction, config.ann.seed)


def check_index_matches(index: AnnIndex, groups: list[OutlierGroup], dim: int) -> None:
    pairs = flat_phrases(groups)
    if index.dim != dim:
        raise DimensionMismatch(f"index dim {index.dim} != embedder dim {dim}")
    outliers = [l for l in index.labels if l.kind == PointKind.OUTLIER_PHRASE]
    if len(outliers) != len(pairs) or any(
            l.ref_id >= len(pairs) or pairs[l.ref_id][0] != l.group_name for l in outliers):
        raise ValueError("outlier index does not match the configured groups")


# pipeline

def prepare_document(html: str | bytes, config: CleanConfig,
                     provider: Provider | None = None) -> PreparedDocument:
    metadata, segments = parse_document(html, config.min_segment_chars, config.split_sentences)
    meta_text = metadata.combined_text
    # the hashing embedder needs 3 characters; shorter metadata is treated as absent
    use_meta = len(meta_text.strip()) >= 3
    texts = ([meta_text] if use_meta else []) + [s.text for s in segments]
    vecs = embed_texts(texts, config.embedder, provider)
    if use_meta:
        return PreparedDocument(metadata, segments, vecs[1:], vecs[0], "metadata")
    centroid = vecs.astype(np.float64).mean(axis=0)
    norm = np.linalg.norm(centroid)
    wm = (centroid / norm).astype(np.float32) if norm > 0 else vecs[0]
    return PreparedDocument(metadata, segments, vecs, wm, "centroid")


def clean_prepared(doc: PreparedDocument, config: CleanConfig, outlier_index: AnnIndex,
                   phrases: Sequence[tuple[str, str]] | None = None) -> CleanResult:
    """Core selection, classification, removal and fallback on a prepared document."""
    started = time.perf_counter()
    core = select_core(doc.vectors, doc.metadata_vector, config.core_fraction_k)
    extra = [(doc.vectors[i], PointLabel(PointKind.CORE_SEGMENT, i)) for i in sorted(core)]
    if config.include_metadata_in_core_anchors:
        extra.append((doc.metadata_vector, PointLabel(PointKind.METADATA, 0)))
    augmented = ann.add_points(outlier_index, extra)

    decisions: list[RemovalDecision] = []
    for seg, vec in zip(doc.segments, doc.vectors):
        if seg.id in core:
            d_out, _, _, _ = anchor_distances(augmented, vec, config.ann.ef_search)
            decisions.append(RemovalDecision(seg.id, Verdict.KEPT_CORE, None, 0.0, max(d_out, 0.0)))
            continue
        c = classify_segment(vec, augmented, config, phrases)
        decisions.append(RemovalDecision(seg.id, c.verdict, c.reason, c.d_core, c.d_outlier,
                                         c.nearest_phrase))

    total_chars = sum(len(s.text) for s in doc.segments)
    flagged = [d for d in decisions if d.verdict.removed]
    flagged_chars = sum(len(doc.segments[d.segment_id].text) for d in flagged)
    flagged_fraction = flagged_chars / total_chars if total_chars else 0.0
    fallback = flagged_fraction > config.max_removal_fraction
    if fallback:
        logger.info("removal of %.1f%% exceeds %.1f%%; keeping every segment",
                    100 * flagged_fraction, 100 * config.max_removal_fraction)
        decisions = [
            RemovalDecision(d.segment_id, Verdict.KEPT_BY_FALLBACK, d.reason, d.d_core, d.d_outlier, d.nearest_phrase)
            if d.verdict.removed else d
            for d in decisions
        ]
    stats = CleanStats(
        n_segments=len(doc.segments),
        n_removed=0 if fallback else len(flagged),
        removed_char_fraction=0.0 if fallback else flagged_fraction,
        n_flagged=len(flagged),
        flagged_char_fraction=flagged_fraction,
        metadata_anchor=doc.metadata_anchor,
        elapsed_ms=(time.perf_counter() - started) * 1000.0,
    )
    return CleanResult(doc.metadata, doc.segments, decisions, fallback, stats)


def clean_document(html: str | bytes, config: CleanConfig, prebuilt_outlier_index: AnnIndex,
                   provider: Provider | None = None,
                   groups: list[OutlierGroup] | None = None) -> CleanResult:
    """Clean one HTML document.

    ``groups`` must be the groups the index was built from; it is only used
    to report ``nearest_phrase`` and defaults to the builtin set.

    Raises:
        EmptyDocument: nothing to clean.
        ProviderUnavailable: the embedding provider failed after retries.
    """
    started = time.perf_counter()
    if prebuilt_outlier_index.dim != config.embedder.dim:
        raise DimensionMismatch(
            f"index dim {prebuilt_outlier_index.dim} != embedder dim {config.embedder.dim}")
    doc = prepare_document(html, config, provider)
    phrases = flat_phrases(groups if groups is not None else builtin_groups())
    result = clean_prepared(doc, config, prebuilt_outlier_index, phrases)
    result.stats.elapsed_ms = (time.perf_counter() - started) * 1000.0
    return result


class Cleaner:
    """A reusable pipeline: config, groups, provider and the serialized
    outlier index. Safe to share between threads; every call deserializes a
    private copy of the index."""

    def __init__(self, config: CleanConfig | None = None, groups: list[OutlierGroup] | None = None,
                 index_bytes: bytes | None = None, provider: Provider | None = None):
        self.config = config or CleanConfig()
        self.groups = groups if groups is not None else builtin_groups()
        self.provider = provider or make_provider(self.config.embedder)
        if index_bytes is None:
            index = build_outlier_index(self.groups, self.config, self.provider)
            index_bytes = ann.serialize(index)
        self.index_bytes = index_bytes
        check_index_matches(ann.deserialize(index_bytes), self.groups, self.config.embedder.dim)
        self.phrases = flat_phrases(self.groups)

    def clean(self, html: str | bytes, config: CleanConfig | None = None) -> CleanResult:
        cfg = config or self.config
        started = time.perf_counter()
        doc = prepare_document(html, cfg, self.provider)
        result = clean_prepared(doc, cfg, ann.deserialize(self.index_bytes), self.phrases)
        result.stats.elapsed_ms = (time.perf_counter() - started) * 1000.0
        return result
