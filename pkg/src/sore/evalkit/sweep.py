"""(k, d) grid sweeps producing precision/recall curve data."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import IO, Sequence

from sore.ann import AnnIndex
from sore.core import CleanConfig, clean_prepared, prepare_document
from sore.embedder import Provider
from sore.errors import SoreError
from sore.evalkit.metrics import EvalScores, corpus_eval

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["k", "d", "precision", "recall", "f", "mean_removed_fraction", "skipped"]


@dataclass(frozen=True)
class SweepPoint:
    k: float
    d: float
    scores: EvalScores  # macro
    micro: EvalScores
    mean_removed_fraction: float
    skipped: int = 0


def baseline_scores(corpus: Sequence[tuple[str, str]], config: CleanConfig) -> tuple[EvalScores, EvalScores]:
    """Macro and micro scores of keeping every segment (no removal at all)."""
    from sore.segmenter import parse_document
    pairs = []
    for html, truth in corpus:
        _, segments = parse_document(html, config.min_segment_chars, config.split_sentences)
        pairs.append(("\n\n".join(s.text for s in segments), truth))
    return corpus_eval(pairs, "macro"), corpus_eval(pairs, "micro")


def sweep(corpus: Sequence[tuple[str, str]], k_grid: Sequence[float], d_grid: Sequence[float],
          config: CleanConfig, outlier_index: AnnIndex, phrases=None,
          provider: Provider | None = None) -> list[SweepPoint]:
    """Clean every document at every ``(k, d)`` and score against its truth.

    Each document is parsed and embedded once. Documents that fail to
    prepare are skipped and counted in ``SweepPoint.skipped``.
    """
    if not k_grid or not d_grid:
        raise ValueError("k_grid and d_grid must be non-empty")
    prepared = []
    skipped = 0
    for i, (html, truth) in enumerate(corpus):
        try:
            prepared.append((prepare_document(html, config, provider), truth))
        except SoreError as exc:
            logger.warning("skipping document %d: %s", i, exc)
            skipped += 1
    points = []
    for k in k_grid:
        for d in d_grid:
            cfg = config.replace(core_fraction_k=k, distance_cutoff_d=d)
            pairs = []
            removed = 0.0
            for doc, truth in prepared:
                result = clean_prepared(doc, cfg, outlier_index, phrases)
                pairs.append((result.cleaned_text, truth))
                removed += result.stats.removed_char_fraction
            if pairs:
                macro, micro = corpus_eval(pairs, "macro"), corpus_eval(pairs, "micro")
                mean_removed = removed / len(pairs)
            else:
                macro = micro = EvalScores(0.0, 0.0, 0.0)
                mean_removed = 0.0
            points.append(SweepPoint(k, d, macro, micro, mean_removed, skipped))
    return points


def write_sweep_csv(points: Sequence[SweepPoint], fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for p in points:
        writer.writerow([p.k, p.d, f"{p.scores.precision:.6f}", f"{p.scores.recall:.6f}",
                         f"{p.scores.f_score:.6f}", f"{p.mean_removed_fraction:.6f}", p.skipped])
