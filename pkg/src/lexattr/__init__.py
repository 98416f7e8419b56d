"""Sequence-labeling toolkit for criminal-case attribute extraction.

Pipeline: span-annotated legal documents -> token-level tags (linear-chain
CRF) -> per-tag accuracy reports -> judgment-prediction experiments with
Text / Text+Tag / Text+Span input compositions.
"""

__version__ = "0.1.0"

from .tags import DEFAULT_TAGS, TagSet

__all__ = ["DEFAULT_TAGS", "TagSet", "__version__"]
