"""OpenMIC archive conversion.

The published archive ships three inputs this converter consumes:

* ``openmic-2018.npz`` — arrays ``X`` (N x T x 128 VGGish features),
  ``Y_true`` (N x C soft crowd confidences in [0, 1]), ``Y_mask`` (N x C
  booleans marking which labels were actually annotated), and ``sample_key``
  (N clip identifiers).
* ``class-map.json`` — instrument name to contiguous class index.
* ``partitions/split01_train.csv`` / ``partitions/split01_test.csv`` — the
  published train/test partition, one sample key per line.

Soft confidences are binarized at a configurable threshold: strictly above
becomes positive, strictly below negative, and exact ties fall back to
missing, since an evenly split crowd asserts neither presence nor absence.
Unannotated entries stay missing.  The converter writes the canonical files
plus an ``ingest_report.json`` recording source and written label counts.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import canonical
from .manifest import SOURCE_OPENMIC, IngestError, IngestManifest

ARCHIVE_NPZ = "openmic-2018.npz"
CLASS_MAP = "class-map.json"
PARTITION_FILES = ("partitions/split01_train.csv", "partitions/split01_test.csv")

VGGISH_DIM = 128


def _locate(input_dir: Path, relative: str) -> Path:
    """Find a required archive file at the root or one directory down."""
    direct = input_dir / relative
    if direct.exists():
        return direct
    candidates = sorted(
        p for p in input_dir.glob(f"*/{relative}") if p.is_file()
    )
    if len(candidates) == 1:
        return candidates[0]
    if not candidates:
        raise IngestError(f"{relative} not found under {input_dir}")
    raise IngestError(
        f"multiple copies of {relative} under {input_dir}: "
        + ", ".join(str(c) for c in candidates)
    )


def _read_partition(path: Path, known: set) -> list:
    """Read one sample key per line, tolerating an optional header line."""
    keys = []
    seen = set()
    with open(path, "r", encoding="utf-8") as f:
        for row_number, line in enumerate(f, start=1):
            key = line.strip().strip(",")
            if not key:
                continue
            if row_number == 1 and key == "sample_key":
                continue
            if key not in known:
                raise IngestError(f"{path} row {row_number}: unknown sample key {key!r}")
            if key in seen:
                raise IngestError(f"{path} row {row_number}: duplicate sample key {key!r}")
            seen.add(key)
            keys.append(key)
    if not keys:
        raise IngestError(f"{path} lists no sample keys")
    return keys


def _load_class_names(path: Path, num_classes: int) -> list:
    try:
        with open(path, encoding="utf-8") as f:
            mapping = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise IngestError(f"cannot read class map {path}: {exc}") from exc
    if not isinstance(mapping, dict) or not mapping:
        raise IngestError(f"{path} must map class names to indices")
    by_index = {}
    for name, idx in mapping.items():
        if not isinstance(idx, int) or idx in by_index:
            raise IngestError(f"{path}: bad or duplicate index for class {name!r}")
        by_index[idx] = str(name)
    if sorted(by_index) != list(range(len(by_index))):
        raise IngestError(f"{path}: class indices must be contiguous from 0")
    if len(by_index) != num_classes:
        raise IngestError(
            f"{path} defines {len(by_index)} classes, archive has {num_classes}"
        )
    return [by_index[i] for i in range(len(by_index))]


def convert_openmic(manifest: IngestManifest) -> dict:
    """Convert an OpenMIC archive; returns the conversion report payload."""
    if manifest.source_name != SOURCE_OPENMIC:
        raise ValueError(f"manifest source is {manifest.source_name!r}, expected openmic")

    npz_path = _locate(manifest.input_dir, ARCHIVE_NPZ)
    class_map_path = _locate(manifest.input_dir, CLASS_MAP)
    partition_paths = [_locate(manifest.input_dir, rel) for rel in PARTITION_FILES]

    try:
        with np.load(npz_path, allow_pickle=False) as archive:
            missing_keys = [k for k in ("X", "Y_true", "Y_mask", "sample_key")
                            if k not in archive.files]
            if missing_keys:
                raise IngestError(f"{npz_path} lacks arrays {missing_keys}")
            features = np.asarray(archive["X"])
            confidences = np.asarray(archive["Y_true"], dtype=np.float64)
            mask = np.asarray(archive["Y_mask"], dtype=bool)
            sample_keys = [str(k) for k in archive["sample_key"]]
    except (OSError, ValueError) as exc:
        raise IngestError(f"cannot read {npz_path}: {exc}") from exc

    if features.ndim != 3:
        raise IngestError(f"{npz_path}: X must be clips x frames x dims, got shape {features.shape}")
    if features.shape[2] != VGGISH_DIM:
        raise IngestError(
            f"{npz_path}: feature dimension is {features.shape[2]}, expected {VGGISH_DIM}"
        )
    n_clips = features.shape[0]
    if confidences.shape[0] != n_clips or mask.shape != confidences.shape:
        raise IngestError(f"{npz_path}: X, Y_true, and Y_mask disagree on shape")
    if len(sample_keys) != n_clips or len(set(sample_keys)) != n_clips:
        raise IngestError(f"{npz_path}: sample_key must name each clip exactly once")
    if not np.isfinite(features).all():
        raise IngestError(f"{npz_path}: X contains non-finite values")
    num_classes = confidences.shape[1]

    class_names = _load_class_names(class_map_path, num_classes)

    known = set(sample_keys)
    train_keys, test_keys = (_read_partition(p, known) for p in partition_paths)
    overlap = set(train_keys) & set(test_keys)
    if overlap:
        raise IngestError(f"sample key {sorted(overlap)[0]!r} appears in both partitions")
    tags = {}
    for key in train_keys:
        tags[key] = "train"
    for key in test_keys:
        tags[key] = "test"
    unpartitioned = [k for k in sample_keys if k not in tags]
    if unpartitioned:
        raise IngestError(f"sample key {unpartitioned[0]!r} appears in no partition")

    threshold = manifest.binarization_threshold
    states = np.full(confidences.shape, canonical.MISSING, dtype=np.int8)
    states[mask & (confidences > threshold)] = 1
    states[mask & (confidences < threshold)] = 0
    observed_source = int(mask.sum())
    positives = int((states == 1).sum())
    negatives = int((states == 0).sum())
    observed_written = positives + negatives

    report = {
        "source": SOURCE_OPENMIC,
        "threshold": threshold,
        "clips": n_clips,
        "classes": num_classes,
        "observed_source": observed_source,
        "observed_written": observed_written,
        "ties_dropped": observed_source - observed_written,
        "positives": positives,
        "negatives": negatives,
        "coverage": canonical.coverage_of(states),
        "splits": {"train": len(train_keys), "test": len(test_keys)},
    }

    files = {
        canonical.EMBEDDINGS_FILENAME: canonical.embeddings_bytes(
            sample_keys, [features[i] for i in range(n_clips)]
        ),
        canonical.LABELS_FILENAME: canonical.labels_bytes(sample_keys, states),
        canonical.CLASSES_FILENAME: canonical.classes_bytes(class_names),
        canonical.SPLITS_FILENAME: canonical.splits_bytes(
            sample_keys, [tags[k] for k in sample_keys]
        ),
        canonical.REPORT_FILENAME: canonical.report_bytes(report),
    }
    canonical.write_output(manifest.output_dir, files)

    print(f"clips:    {n_clips}")
    print(f"classes:  {num_classes}")
    print(f"labels:   {observed_source} observed in source, {observed_written} written "
          f"({report['ties_dropped']} at threshold dropped)")
    print(f"coverage: {report['coverage']:.4f}")
    print(f"splits:   {len(train_keys)} train, {len(test_keys)} test")
    return report
