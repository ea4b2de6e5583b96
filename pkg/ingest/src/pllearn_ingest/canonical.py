"""Byte-level writers for the canonical dataset files.

This package talks to the training toolkit only through its documented file
formats, so the serializers live here rather than being imported from it:

* embeddings (binary, little-endian): magic ``PLLEMB01``, u32 clip count,
  then per clip u32 id length, UTF-8 clip id, u32 T, u32 D, and T*D float32
  values row-major.
* labels (CSV, header ``clip_id,class_index,state``): one row per observed
  label, state 0 = negative / 1 = positive; missing labels have no row.
* classes (CSV, header ``class_index,class_name``): contiguous indices 0..C-1.
* splits (CSV, header ``clip_id,split``): split is ``train`` or ``test``;
  an optional ``fixed_validation.csv`` sidecar (header ``clip_id``) pins the
  validation subset of the train split.

Converters build every output file in memory first and only then touch the
output directory, so a failed conversion leaves no partial output behind.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from pathlib import Path

import numpy as np

EMBEDDINGS_MAGIC = b"PLLEMB01"

EMBEDDINGS_FILENAME = "embeddings.bin"
LABELS_FILENAME = "labels.csv"
CLASSES_FILENAME = "classes.csv"
SPLITS_FILENAME = "splits.csv"
FIXED_VALIDATION_FILENAME = "fixed_validation.csv"
REPORT_FILENAME = "ingest_report.json"

MISSING = -1


def _csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue().encode("utf-8")


def embeddings_bytes(clip_ids, frames_list) -> bytes:
    """Serialize per-clip float32 frame matrices to the binary format."""
    out = io.BytesIO()
    out.write(EMBEDDINGS_MAGIC)
    out.write(struct.pack("<I", len(clip_ids)))
    for clip_id, frames in zip(clip_ids, frames_list):
        ident = clip_id.encode("utf-8")
        out.write(struct.pack("<I", len(ident)))
        out.write(ident)
        t, d = frames.shape
        out.write(struct.pack("<II", t, d))
        out.write(np.ascontiguousarray(frames, dtype="<f4").tobytes())
    return out.getvalue()


def labels_bytes(clip_ids, states) -> bytes:
    """Serialize observed entries of a tri-state label matrix (missing = -1)."""
    rows = []
    for i, clip_id in enumerate(clip_ids):
        for c in range(states.shape[1]):
            if states[i, c] != MISSING:
                rows.append([clip_id, c, int(states[i, c])])
    return _csv_bytes(["clip_id", "class_index", "state"], rows)


def classes_bytes(class_names) -> bytes:
    rows = [[i, name] for i, name in enumerate(class_names)]
    return _csv_bytes(["class_index", "class_name"], rows)


def splits_bytes(clip_ids, tags) -> bytes:
    for tag in tags:
        if tag not in ("train", "test"):
            raise ValueError(f"split tags must be train or test, got {tag!r}")
    return _csv_bytes(["clip_id", "split"], zip(clip_ids, tags))


def fixed_validation_bytes(clip_ids) -> bytes:
    return _csv_bytes(["clip_id"], ([cid] for cid in clip_ids))


def report_bytes(payload: dict) -> bytes:
    return (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode("utf-8")


def write_output(output_dir, files: dict) -> None:
    """Write prebuilt file payloads into the output directory."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, payload in files.items():
        (out / name).write_bytes(payload)


def coverage_of(states) -> float:
    """Fraction of (clip, class) cells holding an observed label."""
    return float((np.asarray(states) != MISSING).mean())
