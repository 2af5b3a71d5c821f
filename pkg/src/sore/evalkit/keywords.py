"""Per-phrase removal accuracy from decision logs.

A removal attributed to an outlier phrase counts as correct when fewer than
half of the removed segment's tokens also occur in the reference text.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from sore.evalkit.metrics import tokenize

CORRECT_OVERLAP_BELOW = 0.5


@dataclass(frozen=True)
class KeywordAccuracyRow:
    phrase: str
    occurrence: int
    accuracy: float | None

    def to_dict(self) -> dict:
        return {"phrase": self.phrase, "occurrence": self.occurrence, "accuracy": self.accuracy}


@dataclass(frozen=True)
class LoggedRemoval:
    """The slice of a decision-log record the report needs."""
    verdict: str
    nearest_phrase: str | None
    text: str


def truth_overlap(segment_text: str, truth_counts: Counter) -> float:
    seg = Counter(tokenize(segment_text))
    n = sum(seg.values())
    if n == 0:
        return 0.0
    return sum((seg & truth_counts).values()) / n


def keyword_accuracy(documents: Sequence[Iterable[LoggedRemoval]], truths: Sequence[str],
                     phrases: Iterable[str] = ()) -> list[KeywordAccuracyRow]:
    """One row per phrase, least accurate first.

    ``documents[i]`` holds the logged decisions for the document whose
    reference text is ``truths[i]``. Phrases listed in ``phrases`` but never
    matched get a row with ``accuracy=None``; those sort last.
    """
    if len(documents) != len(truths):
        raise ValueError("need one truth text per document")
    occurrence: Counter = Counter()
    correct: Counter = Counter()
    for records, truth in zip(documents, truths):
        truth_counts = Counter(tokenize(truth))
        for rec in records:
            if rec.verdict != "removed_outlier" or rec.nearest_phrase is None:
                continue
            occurrence[rec.nearest_phrase] += 1
            if truth_overlap(rec.text, truth_counts) < CORRECT_OVERLAP_BELOW:
                correct[rec.nearest_phrase] += 1
    rows = [KeywordAccuracyRow(p, n, correct[p] / n) for p, n in occurrence.items()]
    rows += [KeywordAccuracyRow(p, 0, None) for p in dict.fromkeys(phrases) if p not in occurrence]
    rows.sort(key=lambda r: (r.accuracy is None, r.accuracy if r.accuracy is not None else 0.0,
                             -r.occurrence, r.phrase))
    return rows


def removals_from_result(result) -> list[LoggedRemoval]:
    return [LoggedRemoval(d.verdict.value, d.nearest_phrase, result.segments[d.segment_id].text)
            for d in result.decisions]


def read_decision_log(path: str | Path) -> dict[str, list[LoggedRemoval]]:
    """Group JSONL decision-log lines by ``doc_id``, preserving order."""
    docs: dict[str, list[LoggedRemoval]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            docs.setdefault(str(rec.get("doc_id")), []).append(
                LoggedRemoval(rec["verdict"], rec.get("nearest_phrase"), rec.get("text", "")))
    return docs


def format_table(rows: Sequence[KeywordAccuracyRow], limit: int | None = None) -> str:
    lines = [f"{'Phrase':<32} {'Occurrence':>10} {'Accuracy':>9}"]
    for r in rows[:limit]:
        acc = "null" if r.accuracy is None else f"{r.accuracy:.3f}"
        lines.append(f"{r.phrase:<32} {r.occurrence:>10} {acc:>9}")
    return "\n".join(lines)
