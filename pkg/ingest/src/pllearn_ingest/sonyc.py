"""SONYC-UST archive conversion.

Inputs are the published ``annotations.csv`` plus a directory of precomputed
OpenL3 clip features (one ``<stem>.npz`` with an ``embedding`` array, or a
raw ``<stem>.npy``, per audio file; T x 512 row-major).

``annotations.csv`` holds one row per (clip, annotator).  Fine-grained tag
columns are named ``<group>-<index>_<name>_presence``; each group may also
carry an uncertainty column ``<group>-X_<name>_presence`` raised when an
annotator heard something in the group without identifying which tag.  Cell
values: 1 = present vote, 0 = absent vote, -1 or empty = no vote.  Rows with
``annotator_id`` 0 are verified annotations and, when present for a clip,
supersede its crowd rows entirely.

Aggregation over the governing rows is configurable: ``any`` marks a tag
positive on any present vote, ``majority`` requires strictly more present
than absent votes; otherwise absent votes make a negative and unvoted tags
stay missing.  When a group's uncertainty tag aggregates positive, that
group's negatives are demoted to missing — the annotators admitted they
could not pin the sound down, so absence within the group is unverifiable.
This is the mechanism behind the dataset's roughly 94% label coverage.

The published split is preserved three ways: train and test clips keep their
tags, while validation clips are tagged ``train`` in ``splits.csv`` and
listed in a ``fixed_validation.csv`` sidecar, which downstream experiment
runs consume to reproduce the published validation set instead of sampling
their own.
"""

from __future__ import annotations

import csv
import re
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import canonical
from .manifest import SOURCE_SONYC, IngestError, IngestManifest

ANNOTATIONS_FILENAME = "annotations.csv"
OPENL3_DIM = 512
VERIFIED_ANNOTATOR = 0

_FINE_RE = re.compile(r"^(\d+)-(\d+)_.+_presence$")
_X_RE = re.compile(r"^(\d+)-X_.+_presence$")

_SPLIT_ALIASES = {
    "train": "train",
    "validate": "validation",
    "validation": "validation",
    "test": "test",
}


def _locate_annotations(input_dir: Path) -> Path:
    direct = input_dir / ANNOTATIONS_FILENAME
    if direct.exists():
        return direct
    candidates = sorted(p for p in input_dir.glob(f"*/{ANNOTATIONS_FILENAME}") if p.is_file())
    if len(candidates) == 1:
        return candidates[0]
    if not candidates:
        raise IngestError(f"{ANNOTATIONS_FILENAME} not found under {input_dir}")
    raise IngestError(
        f"multiple copies of {ANNOTATIONS_FILENAME} under {input_dir}: "
        + ", ".join(str(c) for c in candidates)
    )


def _parse_header(header: list, path: Path):
    """Return (required column indices, fine tag columns, X columns by group)."""
    positions = {}
    for required in ("split", "audio_filename", "annotator_id"):
        if required not in header:
            raise IngestError(f"{path}: missing required column {required!r}")
        positions[required] = header.index(required)
    fine_columns = []  # (tag name without _presence suffix, group, column index)
    x_columns = {}  # group -> column index
    for col, name in enumerate(header):
        fine = _FINE_RE.match(name)
        if fine:
            fine_columns.append((name[: -len("_presence")], fine.group(1), col))
            continue
        unsure = _X_RE.match(name)
        if unsure:
            if unsure.group(1) in x_columns:
                raise IngestError(f"{path}: duplicate uncertainty column for group {unsure.group(1)}")
            x_columns[unsure.group(1)] = col
    if not fine_columns:
        raise IngestError(f"{path}: no fine-grained *_presence columns found")
    return positions, fine_columns, x_columns


def _parse_vote(value: str, path: Path, row_number: int, column: str):
    """Map a presence cell to 1, 0, or None (no vote)."""
    text = value.strip()
    if text in ("", "-1"):
        return None
    try:
        vote = float(text)
    except ValueError:
        raise IngestError(
            f"{path} row {row_number}: bad presence value {value!r} in column {column!r}"
        )
    if vote == 1:
        return 1
    if vote == 0:
        return 0
    if vote == -1:
        return None
    raise IngestError(
        f"{path} row {row_number}: presence value must be -1, 0, or 1, "
        f"got {value!r} in column {column!r}"
    )


def _aggregate(votes: list, mode: str):
    """Resolve one tag's votes to 1, 0, or None (missing)."""
    pos = votes.count(1)
    neg = votes.count(0)
    if mode == "any":
        if pos:
            return 1
        if neg:
            return 0
        return None
    if pos > neg:
        return 1
    if neg > pos:
        return 0
    return None


def _load_annotations(path: Path, vote_mode: str):
    """Parse annotations into per-clip label states and split names."""
    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path} is empty")
        positions, fine_columns, x_columns = _parse_header(header, path)
        splits = {}
        crowd = defaultdict(list)  # clip_id -> list of per-row vote dicts
        verified = defaultdict(list)
        for row_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise IngestError(
                    f"{path} row {row_number}: expected {len(header)} fields, got {len(row)}"
                )
            split_raw = row[positions["split"]].strip()
            if split_raw not in _SPLIT_ALIASES:
                raise IngestError(
                    f"{path} row {row_number}: unknown split {split_raw!r}"
                )
            split = _SPLIT_ALIASES[split_raw]
            filename = row[positions["audio_filename"]].strip()
            clip_id = Path(filename).stem
            if not clip_id:
                raise IngestError(f"{path} row {row_number}: empty audio_filename")
            if splits.setdefault(clip_id, split) != split:
                raise IngestError(
                    f"{path} row {row_number}: clip {clip_id!r} tagged both "
                    f"{splits[clip_id]!r} and {split!r}"
                )
            try:
                annotator = int(row[positions["annotator_id"]])
            except ValueError:
                raise IngestError(
                    f"{path} row {row_number}: bad annotator_id "
                    f"{row[positions['annotator_id']]!r}"
                )
            row_votes = {}
            for name, _group, col in fine_columns:
                row_votes[name] = _parse_vote(row[col], path, row_number, name)
            for group, col in x_columns.items():
                row_votes[("X", group)] = _parse_vote(
                    row[col], path, row_number, header[col]
                )
            bucket = verified if annotator == VERIFIED_ANNOTATOR else crowd
            bucket[clip_id].append(row_votes)
    if not splits:
        raise IngestError(f"{path} lists no clips")

    tag_names = [name for name, _group, _col in fine_columns]
    clip_ids = sorted(splits)
    states = np.full((len(clip_ids), len(tag_names)), canonical.MISSING, dtype=np.int8)
    demoted = 0
    for i, clip_id in enumerate(clip_ids):
        rows = verified[clip_id] if verified[clip_id] else crowd[clip_id]
        for c, (name, _group, _col) in enumerate(fine_columns):
            votes = [r[name] for r in rows if r[name] is not None]
            verdict = _aggregate(votes, vote_mode)
            if verdict is not None:
                states[i, c] = verdict
        for group, _col in x_columns.items():
            x_votes = [r[("X", group)] for r in rows if r[("X", group)] is not None]
            if _aggregate(x_votes, vote_mode) != 1:
                continue
            for c, (_name, tag_group, _tag_col) in enumerate(fine_columns):
                if tag_group == group and states[i, c] == 0:
                    states[i, c] = canonical.MISSING
                    demoted += 1
    return clip_ids, [splits[cid] for cid in clip_ids], tag_names, states, demoted


def _index_feature_files(input_dir: Path) -> dict:
    index = {}
    for path in sorted(input_dir.rglob("*")):
        if path.suffix not in (".npz", ".npy") or not path.is_file():
            continue
        if path.stem in index:
            raise IngestError(
                f"feature files {index[path.stem]} and {path} share stem {path.stem!r}"
            )
        index[path.stem] = path
    return index


def _load_features(path: Path, clip_id: str) -> np.ndarray:
    try:
        if path.suffix == ".npy":
            frames = np.load(path, allow_pickle=False)
        else:
            with np.load(path, allow_pickle=False) as archive:
                for key in ("embedding", "openl3"):
                    if key in archive.files:
                        frames = np.asarray(archive[key])
                        break
                else:
                    if len(archive.files) == 1:
                        frames = np.asarray(archive[archive.files[0]])
                    else:
                        raise IngestError(
                            f"{path}: no embedding array among keys {archive.files}"
                        )
    except (OSError, ValueError) as exc:
        raise IngestError(f"cannot read features for clip {clip_id!r} from {path}: {exc}") from exc
    frames = np.asarray(frames)
    if frames.ndim != 2 or frames.shape[0] < 1:
        raise IngestError(
            f"{path}: features for clip {clip_id!r} must be frames x dims, got shape {frames.shape}"
        )
    if frames.shape[1] != OPENL3_DIM:
        raise IngestError(
            f"{path}: feature dimension is {frames.shape[1]}, expected {OPENL3_DIM}"
        )
    if not np.isfinite(frames).all():
        raise IngestError(f"{path}: features for clip {clip_id!r} contain non-finite values")
    return frames


def convert_sonyc(manifest: IngestManifest) -> dict:
    """Convert a SONYC-UST archive; returns the conversion report payload."""
    if manifest.source_name != SOURCE_SONYC:
        raise ValueError(f"manifest source is {manifest.source_name!r}, expected sonyc-ust")

    annotations_path = _locate_annotations(manifest.input_dir)
    clip_ids, split_names, tag_names, states, demoted = _load_annotations(
        annotations_path, manifest.vote
    )

    feature_index = _index_feature_files(manifest.input_dir)
    frames_list = []
    for clip_id in clip_ids:
        if clip_id not in feature_index:
            raise IngestError(f"no feature file for clip {clip_id!r} under {manifest.input_dir}")
        frames_list.append(_load_features(feature_index[clip_id], clip_id))

    tags = ["train" if s in ("train", "validation") else "test" for s in split_names]
    validation_ids = [cid for cid, s in zip(clip_ids, split_names) if s == "validation"]
    n_test = sum(1 for s in split_names if s == "test")
    n_train = len(clip_ids) - len(validation_ids) - n_test

    positives = int((states == 1).sum())
    negatives = int((states == 0).sum())
    report = {
        "source": SOURCE_SONYC,
        "vote": manifest.vote,
        "clips": len(clip_ids),
        "classes": len(tag_names),
        "observed": positives + negatives,
        "positives": positives,
        "negatives": negatives,
        "missing_from_uncertain": demoted,
        "coverage": canonical.coverage_of(states),
        "splits": {
            "train": n_train,
            "validation": len(validation_ids),
            "test": n_test,
        },
    }

    files = {
        canonical.EMBEDDINGS_FILENAME: canonical.embeddings_bytes(clip_ids, frames_list),
        canonical.LABELS_FILENAME: canonical.labels_bytes(clip_ids, states),
        canonical.CLASSES_FILENAME: canonical.classes_bytes(tag_names),
        canonical.SPLITS_FILENAME: canonical.splits_bytes(clip_ids, tags),
        canonical.FIXED_VALIDATION_FILENAME: canonical.fixed_validation_bytes(validation_ids),
        canonical.REPORT_FILENAME: canonical.report_bytes(report),
    }
    canonical.write_output(manifest.output_dir, files)

    print(f"clips:    {len(clip_ids)}")
    print(f"classes:  {len(tag_names)}")
    print(f"labels:   {positives + negatives} observed ({demoted} demoted to missing "
          f"by uncertainty tags)")
    print(f"coverage: {report['coverage']:.4f}")
    print(f"splits:   {n_train} train, {len(validation_ids)} validation (fixed), "
          f"{n_test} test")
    return report
