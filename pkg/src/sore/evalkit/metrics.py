"""Token-overlap precision / recall / F between extracted and reference text."""

from __future__ import annotations

import unicodedata
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence


@dataclass(frozen=True)
class EvalScores:
    precision: float
    recall: float
    f_score: float
    # macro aggregation only: mean of per-document F
    f_mean: float | None = None

    def to_dict(self) -> dict:
        d = {"precision": self.precision, "recall": self.recall, "f_score": self.f_score}
        if self.f_mean is not None:
            d["f_mean"] = self.f_mean
        return d


def harmonic_mean(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def tokenize(text: str) -> list[str]:
    return unicodedata.normalize("NFKC", text).lower().split()


def _counts(extracted: str, truth: str) -> tuple[int, int, int]:
    ext, ref = Counter(tokenize(extracted)), Counter(tokenize(truth))
    inter = sum((ext & ref).values())
    return inter, sum(ext.values()), sum(ref.values())


def _scores(inter: int, n_ext: int, n_ref: int) -> EvalScores:
    if n_ext == 0 and n_ref == 0:
        return EvalScores(1.0, 1.0, 1.0)
    if n_ext == 0 or n_ref == 0:
        return EvalScores(0.0, 0.0, 0.0)
    p, r = inter / n_ext, inter / n_ref
    return EvalScores(p, r, harmonic_mean(p, r))


def overlap_scores(extracted: str, truth: str) -> EvalScores:
    """Multiset token overlap after NFKC + lowercasing.

    Both empty scores (1, 1, 1); exactly one empty scores (0, 0, 0).
    """
    return _scores(*_counts(extracted, truth))


def corpus_eval(pairs: Iterable[tuple[str, str]], aggregation: str = "macro") -> EvalScores:
    """Aggregate ``(extracted, truth)`` pairs.

    ``macro`` averages per-document P and R, reports F of those means, and
    the mean per-document F in ``f_mean``. ``micro`` pools token counts.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("corpus_eval needs at least one pair")
    if aggregation == "micro":
        inter = n_ext = n_ref = 0
        for extracted, truth in pairs:
            i, e, r = _counts(extracted, truth)
            inter, n_ext, n_ref = inter + i, n_ext + e, n_ref + r
        return _scores(inter, n_ext, n_ref)
    if aggregation != "macro":
        raise ValueError(f"unknown aggregation {aggregation!r}")
    per_doc = [overlap_scores(e, t) for e, t in pairs]
    n = len(per_doc)
    p = sum(s.precision for s in per_doc) / n
    r = sum(s.recall for s in per_doc) / n
    return EvalScores(p, r, harmonic_mean(p, r), sum(s.f_score for s in per_doc) / n)


def score_files(pairs: Sequence[tuple[str, str]]) -> dict:
    """Both aggregations for a list of ``(extracted, truth)`` texts."""
    return {
        "n_docs": len(pairs),
        "macro": corpus_eval(pairs, "macro").to_dict(),
        "micro": corpus_eval(pairs, "micro").to_dict(),
    }
