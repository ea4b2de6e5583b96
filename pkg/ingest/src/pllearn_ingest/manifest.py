"""Conversion job description.

An :class:`IngestManifest` names a source archive layout, where to find it,
where the canonical files go, and the per-source knobs: the confidence
threshold that binarizes OpenMIC's soft crowd labels, and the vote rule that
resolves SONYC-UST's multi-annotator disagreements.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

SOURCE_OPENMIC = "openmic"
SOURCE_SONYC = "sonyc-ust"
VALID_SOURCES = (SOURCE_OPENMIC, SOURCE_SONYC)
VALID_VOTES = ("any", "majority")


class IngestError(Exception):
    """A source archive is missing, malformed, or inconsistent."""


@dataclass(frozen=True)
class IngestManifest:
    """Immutable description of one conversion run.

    ``binarization_threshold`` applies to OpenMIC only: observed soft labels
    strictly above it become positive, strictly below negative, and exact
    ties are dropped back to missing.  ``vote`` applies to SONYC-UST only:
    ``any`` marks a tag positive when any annotator voted present,
    ``majority`` requires strictly more present than absent votes (ties and
    unvoted tags stay missing).
    """

    source_name: str
    input_dir: Path
    output_dir: Path
    binarization_threshold: float = 0.5
    vote: str = "any"

    def __post_init__(self):
        if self.source_name not in VALID_SOURCES:
            raise ValueError(
                f"source_name must be one of {VALID_SOURCES}, got {self.source_name!r}"
            )
        object.__setattr__(self, "input_dir", Path(self.input_dir))
        object.__setattr__(self, "output_dir", Path(self.output_dir))
        if not self.input_dir.is_dir():
            raise ValueError(f"input_dir {str(self.input_dir)!r} is not a directory")
        if not 0.0 < float(self.binarization_threshold) < 1.0:
            raise ValueError(
                f"binarization_threshold must be in (0, 1), got {self.binarization_threshold}"
            )
        object.__setattr__(
            self, "binarization_threshold", float(self.binarization_threshold)
        )
        if self.vote not in VALID_VOTES:
            raise ValueError(f"vote must be one of {VALID_VOTES}, got {self.vote!r}")
