"""Canonical on-disk dataset formats.

Four files describe a dataset:

* embeddings (binary, little-endian): magic ``PLLEMB01``, u32 clip count,
  then per clip u32 id length, UTF-8 clip id, u32 T, u32 D, and T*D float32
  values row-major.
* labels (CSV, header ``clip_id,class_index,state``): one row per observed
  label, state 0 = negative / 1 = positive; missing labels have no row.
* classes (CSV, header ``class_index,class_name``): contiguous indices 0..C-1.
* splits (CSV, header ``clip_id,split``): split is ``train`` or ``test``.
  A validation subset is derived at run time (or read from an optional
  ``fixed_validation.csv`` sidecar, header ``clip_id``).

``read_dataset(write_dataset(d)) == d`` bit-exactly, float payload included.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .data import Dataset, EmbeddingSequence, LabelState, PartialLabelMatrix

EMBEDDINGS_MAGIC = b"PLLEMB01"

EMBEDDINGS_FILENAME = "embeddings.bin"
LABELS_FILENAME = "labels.csv"
CLASSES_FILENAME = "classes.csv"
SPLITS_FILENAME = "splits.csv"
FIXED_VALIDATION_FILENAME = "fixed_validation.csv"


class DatasetIOError(Exception):
    """A canonical dataset file is malformed or inconsistent."""


def canonical_paths(directory) -> tuple[Path, Path, Path, Path]:
    """Default file locations for a dataset directory."""
    d = Path(directory)
    return (
        d / EMBEDDINGS_FILENAME,
        d / LABELS_FILENAME,
        d / CLASSES_FILENAME,
        d / SPLITS_FILENAME,
    )


def write_embeddings(path, embeddings) -> None:
    with open(path, "wb") as f:
        f.write(EMBEDDINGS_MAGIC)
        f.write(struct.pack("<I", len(embeddings)))
        for seq in embeddings:
            ident = seq.clip_id.encode("utf-8")
            f.write(struct.pack("<I", len(ident)))
            f.write(ident)
            f.write(struct.pack("<II", seq.num_frames, seq.embed_dim))
            f.write(np.ascontiguousarray(seq.frames, dtype="<f4").tobytes())


def read_embeddings(path) -> list[EmbeddingSequence]:
    data = Path(path).read_bytes()
    offset = 0

    def take(n: int) -> bytes:
        nonlocal offset
        if offset + n > len(data):
            raise DatasetIOError(f"unexpected end of file in {path}")
        chunk = data[offset : offset + n]
        offset += n
        return chunk

    magic = take(len(EMBEDDINGS_MAGIC))
    if magic != EMBEDDINGS_MAGIC:
        raise DatasetIOError(
            f"bad magic in {path}: expected {EMBEDDINGS_MAGIC!r}, got {magic!r}"
        )
    (num_clips,) = struct.unpack("<I", take(4))
    sequences = []
    seen = set()
    dim = None
    for _ in range(num_clips):
        (id_len,) = struct.unpack("<I", take(4))
        clip_id = take(id_len).decode("utf-8")
        if clip_id in seen:
            raise DatasetIOError(f"duplicate clip id {clip_id!r} in {path}")
        seen.add(clip_id)
        t, d = struct.unpack("<II", take(8))
        if t < 1 or d < 1:
            raise DatasetIOError(f"clip {clip_id!r} has invalid shape {t}x{d}")
        if dim is None:
            dim = d
        elif d != dim:
            raise DatasetIOError(
                f"dimension mismatch: clip {clip_id!r} has D={d}, expected D={dim}"
            )
        frames = np.frombuffer(take(t * d * 4), dtype="<f4").reshape(t, d)
        try:
            sequences.append(EmbeddingSequence(clip_id, frames))
        except ValueError as exc:
            raise DatasetIOError(f"clip {clip_id!r} in {path}: {exc}") from exc
    if offset != len(data):
        raise DatasetIOError(f"{len(data) - offset} trailing bytes in {path}")
    return sequences


def _read_csv_rows(path, expected_header: list[str]):
    """Yield (row_number, row) after validating the header row."""
    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetIOError(f"{path} is empty; expected header {expected_header}")
        if header != expected_header:
            raise DatasetIOError(
                f"{path} has header {header}, expected {expected_header}"
            )
        for row_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected_header):
                raise DatasetIOError(
                    f"{path} row {row_number}: expected {len(expected_header)} fields, got {len(row)}"
                )
            yield row_number, row


def write_classes(path, class_names) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["class_index", "class_name"])
        for i, name in enumerate(class_names):
            writer.writerow([i, name])


def read_classes(path) -> list[str]:
    entries = {}
    for row_number, (idx_s, name) in _read_csv_rows(path, ["class_index", "class_name"]):
        try:
            idx = int(idx_s)
        except ValueError:
            raise DatasetIOError(f"{path} row {row_number}: bad class index {idx_s!r}")
        if idx in entries:
            raise DatasetIOError(f"{path} row {row_number}: duplicate class index {idx}")
        entries[idx] = name
    if not entries:
        raise DatasetIOError(f"{path} defines no classes")
    if sorted(entries) != list(range(len(entries))):
        raise DatasetIOError(f"{path}: class indices must be contiguous from 0")
    return [entries[i] for i in range(len(entries))]


def write_labels(path, dataset: Dataset) -> None:
    states = dataset.labels.states
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["clip_id", "class_index", "state"])
        for i, clip_id in enumerate(dataset.clip_ids):
            for c in range(dataset.num_classes):
                if states[i, c] != int(LabelState.MISSING):
                    writer.writerow([clip_id, c, int(states[i, c])])


def read_labels(path, clip_ids, num_classes: int, allow_unlabeled_rows: bool = True):
    index_of = {cid: i for i, cid in enumerate(clip_ids)}
    states = np.full((len(clip_ids), num_classes), int(LabelState.MISSING), dtype=np.int8)
    filled = np.zeros(states.shape, dtype=bool)
    for row_number, (clip_id, class_s, state_s) in _read_csv_rows(
        path, ["clip_id", "class_index", "state"]
    ):
        if clip_id not in index_of:
            raise DatasetIOError(f"{path} row {row_number}: unknown clip id {clip_id!r}")
        try:
            c = int(class_s)
        except ValueError:
            raise DatasetIOError(f"{path} row {row_number}: bad class index {class_s!r}")
        if not 0 <= c < num_classes:
            raise DatasetIOError(
                f"{path} row {row_number}: class index {c} out of range 0..{num_classes - 1}"
            )
        if state_s not in ("0", "1"):
            raise DatasetIOError(
                f"{path} row {row_number}: state must be 0 or 1, got {state_s!r}"
            )
        i = index_of[clip_id]
        if filled[i, c]:
            raise DatasetIOError(
                f"{path} row {row_number}: duplicate label for clip {clip_id!r} class {c}"
            )
        filled[i, c] = True
        states[i, c] = int(state_s)
    return PartialLabelMatrix(states, allow_unlabeled_rows=allow_unlabeled_rows)


def write_splits(path, dataset: Dataset) -> None:
    for tag in dataset.split_tags:
        if tag not in ("train", "test"):
            raise ValueError(
                f"canonical splits file stores only train/test tags, got {tag!r}; "
                "validation subsets are derived at run time"
            )
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["clip_id", "split"])
        for clip_id, tag in zip(dataset.clip_ids, dataset.split_tags):
            writer.writerow([clip_id, tag])


def read_splits(path, clip_ids) -> list[str]:
    tags = {}
    known = set(clip_ids)
    for row_number, (clip_id, split) in _read_csv_rows(path, ["clip_id", "split"]):
        if clip_id not in known:
            raise DatasetIOError(f"{path} row {row_number}: unknown clip id {clip_id!r}")
        if clip_id in tags:
            raise DatasetIOError(f"{path} row {row_number}: duplicate clip id {clip_id!r}")
        if split not in ("train", "test"):
            raise DatasetIOError(
                f"{path} row {row_number}: split must be train or test, got {split!r}"
            )
        tags[clip_id] = split
    missing = [cid for cid in clip_ids if cid not in tags]
    if missing:
        raise DatasetIOError(f"{path}: no split tag for clip {missing[0]!r}")
    return [tags[cid] for cid in clip_ids]


def write_fixed_validation(path, clip_ids) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["clip_id"])
        for cid in clip_ids:
            writer.writerow([cid])


def read_fixed_validation(path) -> list[str]:
    ids = []
    seen = set()
    for row_number, (clip_id,) in _read_csv_rows(path, ["clip_id"]):
        if clip_id in seen:
            raise DatasetIOError(f"{path} row {row_number}: duplicate clip id {clip_id!r}")
        seen.add(clip_id)
        ids.append(clip_id)
    return ids


def write_dataset(dataset: Dataset, embeddings_path, labels_path, classes_path, splits_path) -> None:
    """Write all four canonical files.  Split tags must be train/test."""
    write_splits(splits_path, dataset)  # fails first if tags are unwritable
    write_embeddings(embeddings_path, dataset.embeddings)
    write_labels(labels_path, dataset)
    write_classes(classes_path, dataset.class_names)


def read_dataset(embeddings_path, labels_path, classes_path, splits_path) -> Dataset:
    """Read and cross-validate the four canonical files."""
    embeddings = read_embeddings(embeddings_path)
    class_names = read_classes(classes_path)
    clip_ids = [e.clip_id for e in embeddings]
    labels = read_labels(labels_path, clip_ids, len(class_names))
    tags = read_splits(splits_path, clip_ids)
    return Dataset(embeddings, labels, class_names, tags)


def write_dataset_dir(dataset: Dataset, directory) -> None:
    Path(directory).mkdir(parents=True, exist_ok=True)
    write_dataset(dataset, *canonical_paths(directory))


def read_dataset_dir(directory) -> Dataset:
    return read_dataset(*canonical_paths(directory))
