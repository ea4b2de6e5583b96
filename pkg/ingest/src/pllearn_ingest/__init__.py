"""Converters from published audio-tagging archives to canonical dataset files.

Two sources are supported: OpenMIC (precomputed VGGish features with soft,
partially observed crowd labels) and SONYC-UST (precomputed OpenL3 features
with multi-annotator urban-sound tags and a published three-way split).
Each converter validates the archive, resolves its labels into explicit
positive/negative/missing states, and writes the canonical embeddings,
labels, classes, and splits files — plus, for SONYC-UST, the sidecar that
pins the published validation subset — ready for training and evaluation.
"""

from .canonical import (
    CLASSES_FILENAME,
    EMBEDDINGS_FILENAME,
    FIXED_VALIDATION_FILENAME,
    LABELS_FILENAME,
    REPORT_FILENAME,
    SPLITS_FILENAME,
)
from .manifest import SOURCE_OPENMIC, SOURCE_SONYC, IngestError, IngestManifest
from .openmic import convert_openmic
from .sonyc import convert_sonyc

__version__ = "0.1.0"

__all__ = [
    "CLASSES_FILENAME",
    "EMBEDDINGS_FILENAME",
    "FIXED_VALIDATION_FILENAME",
    "IngestError",
    "IngestManifest",
    "LABELS_FILENAME",
    "REPORT_FILENAME",
    "SOURCE_OPENMIC",
    "SOURCE_SONYC",
    "SPLITS_FILENAME",
    "convert_openmic",
    "convert_sonyc",
]
