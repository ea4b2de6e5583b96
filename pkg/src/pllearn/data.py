"""Tri-state label matrices, embedding containers, splits, and missing-label
simulation.

Labels are stored as int8 codes: ``1`` positive, ``0`` negative, ``-1``
missing.  A matrix row is a clip, a column is a class.  Ingested real datasets
carry at least one observed label per clip; simulated or ablated matrices may
not, and must then be constructed with ``allow_unlabeled_rows=True``.

All containers are immutable after construction (arrays are frozen), so they
are safe to share across threads for read-only access.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

VALID_SPLITS = ("train", "validation", "test")


class LabelState(enum.IntEnum):
    """Per-(clip, class) annotation state."""

    NEGATIVE = 0
    POSITIVE = 1
    MISSING = -1


_VALID_CODES = (int(LabelState.NEGATIVE), int(LabelState.POSITIVE), int(LabelState.MISSING))


def round_half_away(x: float) -> int:
    """Round to the nearest integer, halves away from zero.

    Used for every count computation (validation-set sizes, dropped-label
    counts, ...) so that all modules agree on rounding.
    """
    if x >= 0:
        return int(math.floor(x + 0.5))
    return -int(math.floor(-x + 0.5))


class PartialLabelMatrix:
    """Immutable N x C tri-state label matrix."""

    def __init__(self, states, allow_unlabeled_rows: bool = False):
        arr = np.array(states, dtype=np.int8, copy=True)
        if arr.ndim != 2:
            raise ValueError(f"label matrix must be 2-D, got shape {arr.shape}")
        if arr.size and not np.isin(arr, _VALID_CODES).all():
            bad = arr[~np.isin(arr, _VALID_CODES)][0]
            raise ValueError(f"invalid label code {int(bad)}; expected one of {_VALID_CODES}")
        observed = arr != int(LabelState.MISSING)
        if not allow_unlabeled_rows:
            unlabeled = np.flatnonzero(~observed.any(axis=1))
            if unlabeled.size:
                raise ValueError(
                    f"clip row {int(unlabeled[0])} has no observed labels; "
                    "pass allow_unlabeled_rows=True for simulated/ablated matrices"
                )
        arr.setflags(write=False)
        observed.setflags(write=False)
        self._states = arr
        self._observed = observed
        self.allow_unlabeled_rows = bool(allow_unlabeled_rows)

    @property
    def states(self) -> np.ndarray:
        """Read-only int8 array of shape (num_clips, num_classes)."""
        return self._states

    @property
    def num_clips(self) -> int:
        return self._states.shape[0]

    @property
    def num_classes(self) -> int:
        return self._states.shape[1]

    @property
    def observed_mask(self) -> np.ndarray:
        """Boolean array, True where the label is not missing."""
        return self._observed

    @property
    def observed_count(self) -> int:
        return int(self._observed.sum())

    def state_counts(self) -> dict[str, int]:
        return {
            "positive": int((self._states == int(LabelState.POSITIVE)).sum()),
            "negative": int((self._states == int(LabelState.NEGATIVE)).sum()),
            "missing": int((self._states == int(LabelState.MISSING)).sum()),
        }

    def __eq__(self, other) -> bool:
        # Equality is on the label states only; allow_unlabeled_rows is a
        # construction-time guard, not data, and is not serialized.
        if not isinstance(other, PartialLabelMatrix):
            return NotImplemented
        return np.array_equal(self._states, other._states)

    def __repr__(self) -> str:
        return (
            f"PartialLabelMatrix({self.num_clips}x{self.num_classes}, "
            f"{self.observed_count} observed)"
        )


def label_coverage(labels: PartialLabelMatrix) -> float:
    """Fraction of (clip, class) entries that carry an observed label."""
    total = labels.num_clips * labels.num_classes
    if total == 0:
        raise ValueError("label coverage is undefined for an empty matrix")
    return labels.observed_count / total


class EmbeddingSequence:
    """Per-clip feature matrix: T frames x D dimensions, float32, finite."""

    def __init__(self, clip_id: str, frames):
        arr = np.array(frames, dtype=np.float32, copy=True)
        if arr.ndim != 2:
            raise ValueError(f"frames must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"frames must be at least 1x1, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError(f"non-finite value in frames of clip {clip_id!r}")
        arr.setflags(write=False)
        self.clip_id = str(clip_id)
        self.frames = arr

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.frames.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingSequence):
            return NotImplemented
        return self.clip_id == other.clip_id and np.array_equal(self.frames, other.frames)

    def __repr__(self) -> str:
        return f"EmbeddingSequence({self.clip_id!r}, {self.num_frames}x{self.embed_dim})"


class Dataset:
    """Embeddings + labels + class names + per-clip split tags."""

    def __init__(self, embeddings, labels: PartialLabelMatrix, class_names, split_tags):
        embeddings = tuple(embeddings)
        class_names = tuple(str(n) for n in class_names)
        split_tags = tuple(str(t) for t in split_tags)
        if labels.num_clips != len(embeddings):
            raise ValueError(
                f"label matrix has {labels.num_clips} rows but {len(embeddings)} "
                "embedding sequences were given"
            )
        if labels.num_classes != len(class_names):
            raise ValueError(
                f"label matrix has {labels.num_classes} columns but "
                f"{len(class_names)} class names were given"
            )
        if len(split_tags) != len(embeddings):
            raise ValueError("one split tag per clip is required")
        for tag in split_tags:
            if tag not in VALID_SPLITS:
                raise ValueError(f"unknown split tag {tag!r}; expected one of {VALID_SPLITS}")
        ids = [e.clip_id for e in embeddings]
        if len(set(ids)) != len(ids):
            seen = set()
            dup = next(i for i in ids if i in seen or seen.add(i))
            raise ValueError(f"duplicate clip id {dup!r}")
        dims = {e.embed_dim for e in embeddings}
        if len(dims) > 1:
            raise ValueError(f"embedding dimension mismatch across clips: {sorted(dims)}")
        self.embeddings = embeddings
        self.labels = labels
        self.class_names = class_names
        self.split_tags = split_tags
        self._clip_ids = tuple(ids)

    @property
    def num_clips(self) -> int:
        return len(self.embeddings)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def clip_ids(self) -> tuple[str, ...]:
        return self._clip_ids

    @property
    def embed_dim(self) -> int:
        if not self.embeddings:
            raise ValueError("empty dataset has no embedding dimension")
        return self.embeddings[0].embed_dim

    def indices_for_split(self, tag: str) -> np.ndarray:
        if tag not in VALID_SPLITS:
            raise ValueError(f"unknown split tag {tag!r}")
        return np.array([i for i, t in enumerate(self.split_tags) if t == tag], dtype=np.intp)

    def subset(self, indices, retag: str | None = None) -> "Dataset":
        """New dataset with the given clip rows, in the given order."""
        indices = np.asarray(indices, dtype=np.intp)
        labels = PartialLabelMatrix(
            self.labels.states[indices], allow_unlabeled_rows=self.labels.allow_unlabeled_rows
        )
        tags = [retag if retag is not None else self.split_tags[i] for i in indices]
        return Dataset([self.embeddings[i] for i in indices], labels, self.class_names, tags)

    def with_labels(self, labels: PartialLabelMatrix) -> "Dataset":
        """Same clips, replacement label matrix."""
        if labels.num_clips != self.num_clips or labels.num_classes != self.num_classes:
            raise ValueError("replacement label matrix shape does not match dataset")
        return Dataset(self.embeddings, labels, self.class_names, self.split_tags)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.embeddings == other.embeddings
            and self.labels == other.labels
            and self.class_names == other.class_names
            and self.split_tags == other.split_tags
        )

    def __repr__(self) -> str:
        return f"Dataset({self.num_clips} clips, {self.num_classes} classes)"


def split_train_val(dataset: Dataset, val_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Split the train-tagged clips into disjoint train/validation datasets.

    The validation set has round(val_fraction * n_train) clips, sampled
    uniformly with the given seed; both subsets keep the original clip order.
    """
    if not 0 < val_fraction < 1:
        raise ValueError(f"val_fraction must be in (0, 1), got {val_fraction}")
    train_idx = dataset.indices_for_split("train")
    if train_idx.size < 2:
        raise ValueError(f"need at least 2 train-tagged clips, got {train_idx.size}")
    n_val = round_half_away(val_fraction * train_idx.size)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(train_idx.size)
    val_pos = np.sort(perm[:n_val])
    train_pos = np.sort(perm[n_val:])
    val_ds = dataset.subset(train_idx[val_pos], retag="validation")
    train_ds = dataset.subset(train_idx[train_pos], retag="train")
    return train_ds, val_ds


def drop_labels(labels: PartialLabelMatrix, fraction: float, seed: int) -> PartialLabelMatrix:
    """Turn a uniformly random fraction of the observed entries into missing.

    Exactly round(fraction * observed_count) entries are removed, sampled
    globally over all observed entries.  Surviving entries are unchanged.  The
    result always allows unlabeled rows, since rows may lose all their labels.
    """
    if not 0 <= fraction <= 1:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    observed_flat = np.flatnonzero(labels.observed_mask)
    n_drop = round_half_away(fraction * observed_flat.size)
    new_states = labels.states.copy()
    if n_drop:
        rng = np.random.default_rng(seed)
        chosen = rng.choice(observed_flat.size, size=n_drop, replace=False)
        new_states.flat[observed_flat[chosen]] = int(LabelState.MISSING)
    return PartialLabelMatrix(new_states, allow_unlabeled_rows=True)


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a desk-scale dataset with known ground truth.

    Each class gets a Gaussian prototype direction (unit vector scaled by
    ``prototype_scale``).  A clip positive for a class mixes that prototype
    into ``active_fraction`` of its frames; every frame additionally receives
    ``noise_std`` Gaussian noise.  Ground truth is fully observed.
    """

    num_clips: int
    num_classes: int
    frames_per_clip: int
    embed_dim: int
    class_prior: float | tuple[float, ...] = 0.3
    noise_std: float = 0.5
    seed: int = 0
    prototype_scale: float = 3.0
    active_fraction: float = 0.5
    test_fraction: float = 0.2

    def __post_init__(self):
        for name in ("num_clips", "num_classes", "frames_per_clip", "embed_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        priors = self.priors()
        if priors.shape != (self.num_classes,):
            raise ValueError(
                f"class_prior must be a scalar or length-{self.num_classes} sequence"
            )
        if not ((priors > 0) & (priors < 1)).all():
            raise ValueError("class priors must lie in (0, 1)")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if not 0 < self.active_fraction <= 1:
            raise ValueError("active_fraction must be in (0, 1]")
        if not 0 <= self.test_fraction < 1:
            raise ValueError("test_fraction must be in [0, 1)")

    def priors(self) -> np.ndarray:
        if isinstance(self.class_prior, (int, float)):
            return np.full(self.num_classes, float(self.class_prior))
        return np.asarray(self.class_prior, dtype=float)


def generate_synthetic(spec: SyntheticSpec) -> tuple[Dataset, PartialLabelMatrix]:
    """Generate a dataset from per-class Gaussian prototypes.

    Returns the dataset together with its fully observed ground-truth label
    matrix (the dataset's own labels are that ground truth; callers typically
    degrade a copy with :func:`drop_labels`).  Deterministic per seed.
    """
    rng = np.random.default_rng(spec.seed)
    n, c, t, d = spec.num_clips, spec.num_classes, spec.frames_per_clip, spec.embed_dim

    prototypes = rng.standard_normal((c, d))
    prototypes /= np.linalg.norm(prototypes, axis=1, keepdims=True)
    prototypes *= spec.prototype_scale

    truth = rng.random((n, c)) < spec.priors()[None, :]
    n_active = max(1, round_half_away(spec.active_fraction * t))

    embeddings = []
    for i in range(n):
        frames = spec.noise_std * rng.standard_normal((t, d))
        for k in np.flatnonzero(truth[i]):
            active = rng.choice(t, size=n_active, replace=False)
            frames[active] += prototypes[k]
        embeddings.append(EmbeddingSequence(f"synth-{i:05d}", frames))

    n_test = round_half_away(spec.test_fraction * n)
    tags = np.array(["train"] * n, dtype=object)
    if n_test:
        tags[rng.choice(n, size=n_test, replace=False)] = "test"

    labels = PartialLabelMatrix(truth.astype(np.int8))
    class_names = [f"class{k:02d}" for k in range(c)]
    dataset = Dataset(embeddings, labels, class_names, tags.tolist())
    return dataset, labels
