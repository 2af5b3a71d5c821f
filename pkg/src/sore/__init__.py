"""Semantic outlier removal for web documents.

Segments an HTML page into text blocks, embeds them, and drops blocks that
sit near a known boilerplate phrase or far from the page's own core content.
"""

from sore.core import AnnConfig, CleanConfig, Cleaner, CleanResult, RemovalDecision, Verdict, clean_document
from sore.embedder import EmbedderConfig, embed_texts
from sore.errors import (
    ConfigParse, CorruptIndex, DimensionMismatch, EmptyDocument, ProviderUnavailable, SoreError,
    TextTooShort,
)
from sore.groups import OutlierGroup, load_outlier_groups
from sore.segmenter import Segment, parse_document

__version__ = "0.1.0"

__all__ = [
    "AnnConfig", "CleanConfig", "CleanResult", "Cleaner", "ConfigParse", "CorruptIndex",
    "DimensionMismatch", "EmbedderConfig", "EmptyDocument", "OutlierGroup", "ProviderUnavailable",
    "RemovalDecision", "Segment", "SoreError", "TextTooShort", "Verdict", "clean_document",
    "embed_texts", "load_outlier_groups", "parse_document",
]
