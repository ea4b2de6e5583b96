"""Two-stage label enhancing.

Stage 1 trains a teacher with missing labels treated as negatives.  The
teacher then scores the training clips in inference mode, and each class
gets a threshold tau at the gamma-th percentile of the teacher's scores over
that class's missing entries.  Missing entries scoring at or above tau are
suspected to be unannotated positives, so the loss mask zeroes them out;
everything else, including every observed label, keeps mask 1.  Stage 2
trains a fresh student with masked BCE under that mask, still targeting the
surviving missing entries as negatives.

Percentiles are nearest-rank: sort ascending and take the element at 1-based
index ceil(gamma/100 * n), with gamma=0 meaning the minimum.  A class with
no missing entries gets tau = +inf, which masks nothing.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, LabelState, PartialLabelMatrix
from .network import AttentionMILParams, save_params
from .trainers import TrainConfig, TrainReport, predict_dataset, train_baseline

TAU_FILENAME = "tau.csv"
MASK_FILENAME = "mask.csv"
TEACHER_FILENAME = "teacher.ckpt"


@dataclass(frozen=True)
class LEConfig:
    """gamma plus the two stage configs (teacher then student)."""

    gamma: float
    teacher: TrainConfig
    student: TrainConfig

    def __post_init__(self):
        if not 0 <= self.gamma <= 100:
            raise ValueError(f"gamma must be in [0, 100], got {self.gamma}")
        if self.teacher.method != "B0":
            raise ValueError("the enhancing teacher trains with method B0")
        if self.student.method != "B1":
            raise ValueError("the enhancing student trains with method B1")

    @classmethod
    def from_train_config(cls, config: TrainConfig) -> "LEConfig":
        """Derive both stages from one runner-level config (method LE)."""
        return cls(
            gamma=config.gamma,
            teacher=config.replace(method="B0"),
            student=config.replace(method="B1"),
        )


def nearest_rank(values: np.ndarray, gamma: float) -> float:
    """Nearest-rank percentile of a 1-D sample; gamma=0 gives the minimum."""
    values = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if values.size == 0:
        raise ValueError("percentile of an empty sample")
    if not 0 <= gamma <= 100:
        raise ValueError(f"gamma must be in [0, 100], got {gamma}")
    rank = max(1, math.ceil(gamma / 100.0 * values.size))
    return float(values[rank - 1])


def class_thresholds(
    teacher_scores: np.ndarray, labels: PartialLabelMatrix, gamma: float
) -> np.ndarray:
    """Per-class tau: gamma-th percentile of scores at that class's missing
    entries.  Classes with no missing entries get +inf (nothing masked)."""
    scores = np.asarray(teacher_scores, dtype=np.float64)
    if scores.shape != labels.states.shape:
        raise ValueError(
            f"scores shape {scores.shape} does not match labels {labels.states.shape}"
        )
    if not np.isfinite(scores).all() or scores.min() < 0 or scores.max() > 1:
        raise ValueError("teacher scores must be probabilities in [0, 1]")
    missing = labels.states == LabelState.MISSING
    tau = np.full(labels.num_classes, np.inf)
    for c in range(labels.num_classes):
        sample = scores[missing[:, c], c]
        if sample.size:
            tau[c] = nearest_rank(sample, gamma)
    return tau


def enhance_mask(
    labels: PartialLabelMatrix, teacher_scores: np.ndarray, tau: np.ndarray
) -> np.ndarray:
    """Binary loss mask: 0 iff the entry is missing and its score >= tau_c.

    Observed entries are always 1.  Ties sit on the masked side (>=), so an
    entry scoring exactly tau is dropped from the loss.
    """
    scores = np.asarray(teacher_scores, dtype=np.float64)
    if scores.shape != labels.states.shape:
        raise ValueError(
            f"scores shape {scores.shape} does not match labels {labels.states.shape}"
        )
    tau = np.asarray(tau, dtype=np.float64)
    if tau.shape != (labels.num_classes,):
        raise ValueError(
            f"tau must have shape ({labels.num_classes},), got {tau.shape}"
        )
    missing = labels.states == LabelState.MISSING
    mask = np.ones(labels.states.shape)
    mask[missing & (scores >= tau[None, :])] = 0.0
    return mask


@dataclass
class LEArtifacts:
    """Everything the pipeline produced, for audit."""

    teacher_params: AttentionMILParams
    teacher_report: TrainReport
    teacher_scores: np.ndarray  # (N_train, C), inference mode
    tau: np.ndarray  # (C,)
    mask: np.ndarray  # (N_train, C) binary
    student_report: TrainReport


def run_label_enhancing(
    config: LEConfig,
    train_set: Dataset,
    val_set: Dataset,
    artifacts_dir=None,
) -> tuple[AttentionMILParams, LEArtifacts]:
    """Full pipeline; returns the trained student and all intermediates.

    With ``artifacts_dir`` set, writes the teacher checkpoint, ``tau.csv``
    (class_index, tau) and ``mask.csv`` (clip_id, class_index, mask) there.
    """
    teacher_params, teacher_report = train_baseline(config.teacher, train_set, val_set)
    teacher_scores = predict_dataset(teacher_params, train_set)
    tau = class_thresholds(teacher_scores, train_set.labels, config.gamma)
    mask = enhance_mask(train_set.labels, teacher_scores, tau)
    student_params, student_report = train_baseline(
        config.student, train_set, val_set, train_mask=mask
    )
    artifacts = LEArtifacts(
        teacher_params, teacher_report, teacher_scores, tau, mask, student_report
    )
    if artifacts_dir is not None:
        write_artifacts(artifacts, train_set, artifacts_dir)
    return student_params, artifacts


def write_artifacts(artifacts: LEArtifacts, train_set: Dataset, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_params(artifacts.teacher_params, directory / TEACHER_FILENAME)
    with open(directory / TAU_FILENAME, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["class_index", "tau"])
        for c, t in enumerate(artifacts.tau):
            writer.writerow([c, repr(float(t))])
    with open(directory / MASK_FILENAME, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["clip_id", "class_index", "mask"])
        for i, clip_id in enumerate(train_set.clip_ids):
            for c in range(train_set.num_classes):
                writer.writerow([clip_id, c, int(artifacts.mask[i, c])])
