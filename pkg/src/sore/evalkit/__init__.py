"""Evaluation and tuning: overlap metrics, keyword accuracy, sweeps, synthetic corpora."""

from sore.evalkit.keywords import KeywordAccuracyRow, keyword_accuracy
from sore.evalkit.metrics import EvalScores, corpus_eval, overlap_scores
from sore.evalkit.sweep import SweepPoint, sweep, write_sweep_csv
from sore.evalkit.synth import generate_synthetic_corpus

__all__ = [
    "EvalScores", "KeywordAccuracyRow", "SweepPoint", "corpus_eval", "generate_synthetic_corpus",
    "keyword_accuracy", "overlap_scores", "sweep", "write_sweep_csv",
]
