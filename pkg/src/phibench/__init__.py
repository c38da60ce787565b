"""Toolkit for benchmarking clinical PHI de-identification.

Span- and token-level evaluation under a unified label taxonomy, document
bootstrap statistics, corpus divergence (Frechet text distance and
Jensen-Shannon divergence), set-cover diversity sampling, surrogate
replacement for release, LLM output grounding and cost estimates.
"""

from phibench.corpus import (
    Category,
    Corpus,
    Document,
    LabelMap,
    PhiSpan,
    apply_label_map,
    builtin_label_maps,
    load_corpus,
    save_corpus,
)
from phibench.errors import ValidationError

__version__ = "0.1.0"

__all__ = [
    "Category",
    "Corpus",
    "Document",
    "LabelMap",
    "PhiSpan",
    "ValidationError",
    "apply_label_map",
    "builtin_label_maps",
    "load_corpus",
    "save_corpus",
    "__version__",
]
