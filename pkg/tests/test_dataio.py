import struct

import numpy as np
import pytest

import pllearn as pl
from pllearn import dataio


def make_dataset():
    rng = np.random.default_rng(2)
    embs = [pl.EmbeddingSequence(f"clip{i}", rng.standard_normal((3 + i % 2, 4)))
            for i in range(6)]
    states = np.array([
        [1, 0, -1], [0, 1, 0], [1, -1, 1], [-1, 0, 0], [0, 0, 1], [1, 1, -1],
    ], dtype=np.int8)
    labels = pl.PartialLabelMatrix(states)
    tags = ["train"] * 4 + ["test"] * 2
    return pl.Dataset(embs, labels, ["dog", "cat", "owl"], tags)


def test_dataset_dir_round_trip(tmp_path):
    ds = make_dataset()
    dataio.write_dataset_dir(ds, tmp_path)
    assert (tmp_path / "embeddings.bin").exists()
    back = dataio.read_dataset_dir(tmp_path)
    assert back == ds
    # float payload survives bit-exactly
    np.testing.assert_array_equal(back.embeddings[0].frames, ds.embeddings[0].frames)


def test_embeddings_bad_magic(tmp_path):
    path = tmp_path / "embeddings.bin"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
    with pytest.raises(dataio.DatasetIOError, match="bad magic"):
        dataio.read_embeddings(path)


def test_embeddings_truncated(tmp_path):
    ds = make_dataset()
    path = tmp_path / "embeddings.bin"
    dataio.write_embeddings(path, ds.embeddings)
    data = path.read_bytes()
    path.write_bytes(data[:-5])
    with pytest.raises(dataio.DatasetIOError, match="unexpected end of file"):
        dataio.read_embeddings(path)


def test_embeddings_trailing_bytes(tmp_path):
    ds = make_dataset()
    path = tmp_path / "embeddings.bin"
    dataio.write_embeddings(path, ds.embeddings)
    path.write_bytes(path.read_bytes() + b"xx")
    with pytest.raises(dataio.DatasetIOError, match="trailing bytes"):
        dataio.read_embeddings(path)


def test_embeddings_duplicate_clip(tmp_path):
    e = pl.EmbeddingSequence("same", np.ones((2, 2)))
    path = tmp_path / "embeddings.bin"
    with open(path, "wb") as f:
        f.write(dataio.EMBEDDINGS_MAGIC)
        f.write(struct.pack("<I", 2))
        for _ in range(2):
            f.write(struct.pack("<I", 4) + b"same")
            f.write(struct.pack("<II", 2, 2))
            f.write(np.ones((2, 2), dtype="<f4").tobytes())
    with pytest.raises(dataio.DatasetIOError, match="duplicate clip id"):
        dataio.read_embeddings(path)


def test_embeddings_dim_mismatch(tmp_path):
    path = tmp_path / "embeddings.bin"
    with open(path, "wb") as f:
        f.write(dataio.EMBEDDINGS_MAGIC)
        f.write(struct.pack("<I", 2))
        for i, d in enumerate((3, 4)):
            ident = f"c{i}".encode()
            f.write(struct.pack("<I", len(ident)) + ident)
            f.write(struct.pack("<II", 2, d))
            f.write(np.ones((2, d), dtype="<f4").tobytes())
    with pytest.raises(dataio.DatasetIOError, match="dimension mismatch"):
        dataio.read_embeddings(path)


def test_labels_missing_entries_have_no_rows(tmp_path):
    ds = make_dataset()
    path = tmp_path / "labels.csv"
    dataio.write_labels(path, ds)
    text = path.read_text()
    assert text.splitlines()[0] == "clip_id,class_index,state"
    # one data line per observed entry
    assert len(text.splitlines()) - 1 == ds.labels.observed_count


def test_labels_read_errors(tmp_path):
    path = tmp_path / "labels.csv"

    def attempt(rows):
        path.write_text("clip_id,class_index,state\n" + "\n".join(rows) + "\n")
        return dataio.read_labels(path, ["a", "b"], 2)

    with pytest.raises(dataio.DatasetIOError, match="unknown clip id"):
        attempt(["zz,0,1"])
    with pytest.raises(dataio.DatasetIOError, match="bad class index"):
        attempt(["a,x,1"])
    with pytest.raises(dataio.DatasetIOError, match="out of range"):
        attempt(["a,5,1"])
    with pytest.raises(dataio.DatasetIOError, match="state must be 0 or 1"):
        attempt(["a,0,-1"])
    with pytest.raises(dataio.DatasetIOError, match="duplicate label"):
        attempt(["a,0,1", "a,0,0"])
    # row numbers point at the offending line
    with pytest.raises(dataio.DatasetIOError, match="row 3"):
        attempt(["a,0,1", "b,9,0"])


def test_labels_header_mismatch(tmp_path):
    path = tmp_path / "labels.csv"
    path.write_text("clip,class,state\na,0,1\n")
    with pytest.raises(dataio.DatasetIOError, match="header"):
        dataio.read_labels(path, ["a"], 1)


def test_classes_round_trip_and_errors(tmp_path):
    path = tmp_path / "classes.csv"
    dataio.write_classes(path, ["dog", "cat"])
    assert dataio.read_classes(path) == ["dog", "cat"]

    path.write_text("class_index,class_name\n0,dog\n2,owl\n")
    with pytest.raises(dataio.DatasetIOError, match="contiguous"):
        dataio.read_classes(path)
    path.write_text("class_index,class_name\n0,dog\n0,cat\n")
    with pytest.raises(dataio.DatasetIOError, match="duplicate class index"):
        dataio.read_classes(path)


def test_splits_validation_tag_rejected_on_write(tmp_path):
    ds = make_dataset()
    retagged = ds.subset(range(ds.num_clips), retag="validation")
    with pytest.raises(ValueError, match="train/test"):
        dataio.write_splits(tmp_path / "splits.csv", retagged)


def test_splits_read_errors(tmp_path):
    path = tmp_path / "splits.csv"
    path.write_text("clip_id,split\na,train\n")
    with pytest.raises(dataio.DatasetIOError, match="no split tag for clip 'b'"):
        dataio.read_splits(path, ["a", "b"])
    path.write_text("clip_id,split\na,train\na,test\n")
    with pytest.raises(dataio.DatasetIOError, match="duplicate clip id"):
        dataio.read_splits(path, ["a"])
    path.write_text("clip_id,split\na,validation\n")
    with pytest.raises(dataio.DatasetIOError, match="split must be train or test"):
        dataio.read_splits(path, ["a"])


def test_fixed_validation_round_trip(tmp_path):
    path = tmp_path / "fixed_validation.csv"
    dataio.write_fixed_validation(path, ["a", "c"])
    assert dataio.read_fixed_validation(path) == ["a", "c"]
    path.write_text("clip_id\na\na\n")
    with pytest.raises(dataio.DatasetIOError, match="duplicate clip id"):
        dataio.read_fixed_validation(path)
