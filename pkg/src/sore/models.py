"""Request/response schemas shared by the HTTP service and the CLI."""

from __future__ import annotations

import json
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from sore.core import CleanConfig, CleanResult
from sore.embedder import MAX_TEXT_CHARS

MAX_HTML_BYTES = 2 * 1024 * 1024


class ConfigOverrides(BaseModel):
    model_config = ConfigDict(extra="forbid")

    core_fraction_k: Optional[float] = Field(None, gt=0.0, le=1.0)
    distance_cutoff_d: Optional[float] = Field(None, ge=0.0)
    outlier_match_cutoff: Optional[float] = Field(None, ge=0.0)
    max_removal_fraction: Optional[float] = Field(None, gt=0.0, le=1.0)
    include_metadata_in_core_anchors: Optional[bool] = None
    split_sentences: Optional[bool] = None

    def apply(self, config: CleanConfig) -> CleanConfig:
        changes = self.model_dump(exclude_none=True)
        return config.replace(**changes) if changes else config


class CleanRequest(BaseModel):
    html: str = Field(min_length=1)
    config_overrides: Optional[ConfigOverrides] = None
    doc_id: Optional[str] = None

    @field_validator("html")
    @classmethod
    def _size_cap(cls, v: str) -> str:
        if len(v.encode("utf-8")) > MAX_HTML_BYTES:
            raise ValueError(f"html exceeds {MAX_HTML_BYTES} bytes")
        return v


class RemovedSegment(BaseModel):
    segment_id: int
    text: str
    reason: str
    d_core: float
    d_outlier: float


class DecisionOut(BaseModel):
    segment_id: int
    verdict: str
    reason: Optional[str]
    d_core: float
    d_outlier: float
    nearest_phrase: Optional[str]


class StatsOut(BaseModel):
    n_segments: int
    n_removed: int
    removed_char_fraction: float
    n_flagged: int
    flagged_char_fraction: float
    metadata_anchor: str
    elapsed_ms: Optional[float] = None


class CleanResponse(BaseModel):
    doc_id: Optional[str]
    title: Optional[str]
    cleaned_text: str
    removed: list[RemovedSegment]
    decisions: list[DecisionOut]
    fallback_applied: bool
    stats: StatsOut

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.model_dump(exclude_none=False, mode="json"), indent=indent,
                          ensure_ascii=False)


class BatchItemError(BaseModel):
    doc_id: Optional[str] = None
    error: str
    detail: str


def build_response(result: CleanResult, doc_id: str | None = None,
                   include_timing: bool = False) -> CleanResponse:
    """Shape a :class:`CleanResult` for the wire; timings are off by default
    so identical input gives byte-identical output."""
    removed = [
        RemovedSegment(segment_id=d.segment_id, text=result.segments[d.segment_id].text,
                       reason=d.reason, d_core=d.d_core, d_outlier=d.d_outlier)
        for d in result.decisions if d.verdict.removed
    ]
    stats = result.stats.to_dict(include_timing=include_timing)
    return CleanResponse(
        doc_id=doc_id,
        title=result.metadata.title,
        cleaned_text=result.cleaned_text,
        removed=removed,
        decisions=[DecisionOut(**d.to_dict()) for d in result.decisions],
        fallback_applied=result.fallback_applied,
        stats=StatsOut(**stats),
    )


def decision_log_lines(result: CleanResult, doc_id: str | None) -> list[str]:
    """One JSON object per segment decision, for the append-only log."""
    lines = []
    for d in result.decisions:
        text = result.segments[d.segment_id].text
        rec = {"doc_id": doc_id, **d.to_dict(), "text": text,
               "truncated": len(text) > MAX_TEXT_CHARS, "fallback_applied": result.fallback_applied}
        lines.append(json.dumps(rec, ensure_ascii=False))
    return lines
