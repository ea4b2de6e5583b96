"""Miniature source archives with hand-derived expected conversions.

Each builder writes a small but structurally faithful archive into a
directory and returns the expected canonical content alongside it, so tests
compare converter output against values worked out by hand.  A tiny
independent reader for the canonical wire formats lives here too; it decodes
the documented byte layout from scratch so writer bugs cannot hide behind a
shared serializer.
"""

from __future__ import annotations

import csv
import json
import shutil
import struct
import subprocess
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

MISSING = -1


# ---------------------------------------------------------------------------
# independent canonical reader


def read_canonical_dir(directory) -> SimpleNamespace:
    d = Path(directory)
    data = (d / "embeddings.bin").read_bytes()
    assert data[:8] == b"PLLEMB01", "bad embeddings magic"
    offset = 8
    (num_clips,) = struct.unpack_from("<I", data, offset)
    offset += 4
    clip_ids, frames = [], []
    for _ in range(num_clips):
        (id_len,) = struct.unpack_from("<I", data, offset)
        offset += 4
        clip_ids.append(data[offset : offset + id_len].decode("utf-8"))
        offset += id_len
        t, dim = struct.unpack_from("<II", data, offset)
        offset += 8
        frames.append(
            np.frombuffer(data, dtype="<f4", count=t * dim, offset=offset)
            .reshape(t, dim)
            .copy()
        )
        offset += t * dim * 4
    assert offset == len(data), "trailing bytes in embeddings file"

    def rows_of(name, header):
        with open(d / name, newline="", encoding="utf-8") as f:
            reader = csv.reader(f)
            assert next(reader) == header, f"bad header in {name}"
            return [row for row in reader if row]

    class_rows = rows_of("classes.csv", ["class_index", "class_name"])
    class_names = [name for _idx, name in class_rows]
    assert [int(i) for i, _ in class_rows] == list(range(len(class_rows)))

    states = np.full((num_clips, len(class_names)), MISSING, dtype=np.int8)
    index_of = {cid: i for i, cid in enumerate(clip_ids)}
    for clip_id, class_s, state_s in rows_of(
        "labels.csv", ["clip_id", "class_index", "state"]
    ):
        states[index_of[clip_id], int(class_s)] = int(state_s)

    split_rows = rows_of("splits.csv", ["clip_id", "split"])
    tags = dict(split_rows)
    split_tags = [tags[cid] for cid in clip_ids]

    fixed = None
    if (d / "fixed_validation.csv").exists():
        fixed = [cid for (cid,) in rows_of("fixed_validation.csv", ["clip_id"])]
    report = None
    if (d / "ingest_report.json").exists():
        report = json.loads((d / "ingest_report.json").read_text(encoding="utf-8"))
    return SimpleNamespace(
        clip_ids=clip_ids,
        frames=frames,
        states=states,
        class_names=class_names,
        split_tags=split_tags,
        fixed=fixed,
        report=report,
    )


def pllearn_validate(directory):
    """Run the training toolkit's dataset check; returns (rc, output)."""
    exe = shutil.which("pllearn")
    if exe is None:
        pytest.skip("pllearn CLI not installed")
    proc = subprocess.run(
        [exe, "ingest-validate", "--dir", str(directory)],
        capture_output=True,
        text=True,
    )
    return proc.returncode, proc.stdout + proc.stderr


def dir_file_bytes(directory) -> dict:
    d = Path(directory)
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.is_file()}


# ---------------------------------------------------------------------------
# miniature OpenMIC archive

OPENMIC_KEYS = ["om_003", "om_001", "om_005", "om_000", "om_004", "om_002"]
OPENMIC_CLASSES = ["drums", "guitar", "piano", "violin", "voice"]
OPENMIC_TRAIN = ["om_003", "om_001", "om_000", "om_002"]
OPENMIC_TEST = ["om_005", "om_004"]

_OPENMIC_CONF = np.array([
    [0.9, 0.1, 0.5, 0.7, 0.2],
    [0.6, 0.0, 0.0, 0.0, 0.0],
    [0.51, 0.49, 0.5, 1.0, 0.0],
    [0.0, 0.3, 0.0, 0.0, 0.0],
    [0.75, 0.25, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.95],
])
_OPENMIC_MASK = np.array([
    [1, 1, 1, 1, 0],
    [1, 0, 0, 0, 0],
    [1, 1, 1, 1, 1],
    [0, 1, 0, 0, 0],
    [1, 1, 0, 0, 0],
    [0, 0, 0, 0, 1],
], dtype=bool)

# Binarized at 0.5: >0.5 positive, <0.5 negative, ==0.5 dropped to missing.
OPENMIC_EXPECTED_STATES = np.array([
    [1, 0, -1, 1, -1],
    [1, -1, -1, -1, -1],
    [1, 0, -1, 1, 0],
    [-1, 0, -1, -1, -1],
    [1, 0, -1, -1, -1],
    [-1, -1, -1, -1, 1],
], dtype=np.int8)
OPENMIC_OBSERVED_SOURCE = 14
OPENMIC_TIES = 2
OPENMIC_EXPECTED_TAGS = ["train", "train", "test", "train", "test", "train"]


def build_openmic_archive(root, feature_dim: int = 128, frames: int = 4):
    root = Path(root)
    archive = root / "openmic-2018"
    (archive / "partitions").mkdir(parents=True)
    rng = np.random.default_rng(0)
    features = rng.normal(size=(len(OPENMIC_KEYS), frames, feature_dim)).astype(np.float32)
    np.savez(
        archive / "openmic-2018.npz",
        X=features,
        Y_true=_OPENMIC_CONF,
        Y_mask=_OPENMIC_MASK,
        sample_key=np.array(OPENMIC_KEYS),
    )
    (archive / "class-map.json").write_text(
        json.dumps({name: i for i, name in enumerate(OPENMIC_CLASSES)}),
        encoding="utf-8",
    )
    (archive / "partitions" / "split01_train.csv").write_text(
        "sample_key\n" + "\n".join(OPENMIC_TRAIN) + "\n", encoding="utf-8"
    )
    (archive / "partitions" / "split01_test.csv").write_text(
        "\n".join(OPENMIC_TEST) + "\n", encoding="utf-8"
    )
    return SimpleNamespace(input_dir=root, archive_dir=archive, features=features)


# ---------------------------------------------------------------------------
# miniature SONYC-UST archive

SONYC_HEADER = [
    "split", "sensor_id", "audio_filename", "annotator_id",
    "1_engine_presence",
    "1-1_small-sounding-engine_presence",
    "1-2_large-sounding-engine_presence",
    "1-X_engine-of-uncertain-size_presence",
    "1-1_small-sounding-engine_proximity",
    "8-1_dog-barking-whining_presence",
]
SONYC_CLASSES = [
    "1-1_small-sounding-engine",
    "1-2_large-sounding-engine",
    "8-1_dog-barking-whining",
]

# (split, sensor, audio, annotator, coarse, 1-1, 1-2, 1-X, proximity, 8-1)
SONYC_ROWS = [
    ("train", "s1", "t0.wav", 1, 1, 1, 0, 0, "near", 0),
    ("train", "s1", "t0.wav", 2, 0, 0, 0, 0, "", 1),
    ("train", "s2", "t1.wav", 1, 1, 0, 0, 1, "", 1),
    ("train", "s2", "t1.wav", 2, 1, 1, 0, 0, "far", -1),
    ("train", "s1", "t2.wav", 3, 0, 0, 0, 0, "", 0),
    ("train", "s3", "t3.wav", 1, 1, -1, 1, 0, "", 0),
    ("validate", "s1", "v0.wav", 0, 1, 1, 0, 0, "", 0),
    ("validate", "s2", "v1.wav", 0, 0, 0, 0, 0, "", 1),
    ("test", "s4", "e0.wav", 5, 1, 1, 1, 0, "", 1),
    ("test", "s4", "e0.wav", 0, 0, 0, 0, 0, "", 1),
    ("test", "s5", "e1.wav", 0, 1, 1, 1, 0, "", 0),
]

SONYC_CLIP_IDS = ["e0", "e1", "t0", "t1", "t2", "t3", "v0", "v1"]

# Any-vote aggregation; t1's group-1 uncertainty flag demotes its 1-2
# negative to missing; e0's verified row supersedes its crowd row.
SONYC_EXPECTED_ANY = np.array([
    [0, 0, 1],     # e0
    [1, 1, 0],     # e1
    [1, 0, 1],     # t0
    [1, -1, 1],    # t1
    [0, 0, 0],     # t2
    [-1, 1, 0],    # t3
    [1, 0, 0],     # v0
    [0, 0, 1],     # v1
], dtype=np.int8)

# Majority vote: split crowds on t0 (both 1-1 and 8-1) and t1 (1-1) become
# missing, and t1's uncertainty flag no longer reaches a positive verdict,
# so its 1-2 negative survives.
SONYC_EXPECTED_MAJORITY = np.array([
    [0, 0, 1],     # e0
    [1, 1, 0],     # e1
    [-1, 0, -1],   # t0
    [-1, 0, 1],    # t1
    [0, 0, 0],     # t2
    [-1, 1, 0],    # t3
    [1, 0, 0],     # v0
    [0, 0, 1],     # v1
], dtype=np.int8)

SONYC_EXPECTED_TAGS = ["test", "test", "train", "train", "train", "train", "train", "train"]
SONYC_FIXED = ["v0", "v1"]
SONYC_FRAME_COUNTS = {"t1": 4}  # every other clip has 3 frames


def build_sonyc_archive(root, feature_dim: int = 512):
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "annotations.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(SONYC_HEADER)
        writer.writerows(SONYC_ROWS)
    rng = np.random.default_rng(1)
    features = {}
    for clip_id in SONYC_CLIP_IDS:
        t = SONYC_FRAME_COUNTS.get(clip_id, 3)
        features[clip_id] = rng.normal(size=(t, feature_dim)).astype(np.float32)
    feature_dir = root / "features"
    (feature_dir / "train").mkdir(parents=True)
    for clip_id, frames in features.items():
        if clip_id == "t2":
            np.save(feature_dir / "t2.npy", frames)
        elif clip_id == "t3":  # nested a level deeper to exercise recursion
            np.savez(feature_dir / "train" / "t3.npz", embedding=frames)
        else:
            np.savez(feature_dir / f"{clip_id}.npz", embedding=frames)
    return SimpleNamespace(input_dir=root, features=features)
