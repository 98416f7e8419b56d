"""Per-token contextual embedding exporter for annotated legal corpora.

Reads the main toolkit's annotation files and writes its binary embedding
format, one vector per whitespace token.
"""

from .encoders import (
    POOLINGS,
    HashedEncoder,
    TransformersEncoder,
    get_encoder,
    subword_windows,
)
from .errors import EncoderUnavailable, ExportError
from .export import GOLDEN_SETTINGS, ExportJob, build_table, export, export_annotations

__version__ = "0.1.0"

__all__ = [
    "POOLINGS",
    "GOLDEN_SETTINGS",
    "EncoderUnavailable",
    "ExportError",
    "ExportJob",
    "HashedEncoder",
    "TransformersEncoder",
    "build_table",
    "export",
    "export_annotations",
    "get_encoder",
    "subword_windows",
]
