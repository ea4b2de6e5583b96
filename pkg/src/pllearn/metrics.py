"""Evaluation metrics over observed labels only.

Missing entries never touch a metric: every computation first selects the
observed positions, so the scores stored at missing positions are
irrelevant by construction.

Average precision is step-wise (non-interpolated): entries are ranked by
descending score, exactly tied scores are pooled into one group, and

    AP = sum_k (R_k - R_{k-1}) * P_k

with precision/recall taken at the end of each group.  The accumulation
runs over plain Python floats in group order, so an independent
enumerate-every-threshold computation produces the identical bits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LabelState, PartialLabelMatrix


@dataclass(frozen=True)
class EvalTable:
    """Clip scores next to tri-state labels, shapes (N, C) each."""

    scores: np.ndarray
    labels: PartialLabelMatrix

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.shape != self.labels.states.shape:
            raise ValueError(
                f"scores shape {scores.shape} does not match labels "
                f"{self.labels.states.shape}"
            )
        if not np.isfinite(scores).all():
            raise ValueError("scores must be finite")
        scores = scores.copy()
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)

    @property
    def num_classes(self) -> int:
        return self.labels.num_classes


def macro_f1(table: EvalTable, threshold: float = 0.5) -> tuple[float, np.ndarray]:
    """Macro-averaged F1 at a fixed decision threshold.

    Per class, over observed entries only: predict positive when
    score >= threshold; F1 = 2*tp / (2*tp + fp + fn), defined as 0 when
    that denominator is 0.  Classes with no observed entries get NaN in
    the per-class vector and are excluded from the macro mean.  Raises
    ValueError if nothing at all is observed.
    """
    states = table.labels.states
    per_class = np.full(table.num_classes, np.nan)
    for c in range(table.num_classes):
        observed = states[:, c] != LabelState.MISSING
        if not observed.any():
            continue
        truth = states[observed, c] == LabelState.POSITIVE
        pred = table.scores[observed, c] >= threshold
        tp = int(np.count_nonzero(truth & pred))
        fp = int(np.count_nonzero(~truth & pred))
        fn = int(np.count_nonzero(truth & ~pred))
        denom = 2 * tp + fp + fn
        per_class[c] = 2 * tp / denom if denom else 0.0
    scored = ~np.isnan(per_class)
    if not scored.any():
        raise ValueError("no observed label entries to score")
    return float(per_class[scored].mean()), per_class


def average_precision(scores: np.ndarray, positives: np.ndarray) -> float:
    """Step-wise AP of a single ranked list.

    ``positives`` is boolean; must contain at least one True.  Exactly
    tied scores form one group scored at the group's end.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    positives = np.asarray(positives, dtype=bool).ravel()
    if scores.shape != positives.shape:
        raise ValueError("scores and positives must have the same length")
    npos = int(positives.sum())
    if npos == 0:
        raise ValueError("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    cumulative_tp = np.cumsum(positives[order])
    # exclusive end index of each tie group
    starts = np.flatnonzero(np.diff(sorted_scores)) + 1
    group_ends = np.append(starts, scores.size)
    ap = 0.0
    recall_prev = 0.0
    for end in group_ends:
        end = int(end)
        tp = int(cumulative_tp[end - 1])
        precision = tp / end
        recall = tp / npos
        ap += (recall - recall_prev) * precision
        recall_prev = recall
    return ap


def per_class_average_precision(table: EvalTable) -> tuple[np.ndarray, np.ndarray]:
    """(AP vector, scoreable mask).

    A class is scoreable when its observed entries include at least one
    positive and one negative; others get NaN and a False flag.
    """
    states = table.labels.states
    values = np.full(table.num_classes, np.nan)
    scoreable = np.zeros(table.num_classes, dtype=bool)
    for c in range(table.num_classes):
        observed = states[:, c] != LabelState.MISSING
        truth = states[observed, c] == LabelState.POSITIVE
        if truth.size == 0 or truth.all() or not truth.any():
            continue
        scoreable[c] = True
        values[c] = average_precision(table.scores[observed, c], truth)
    return values, scoreable


def auprc(table: EvalTable, mode: str = "macro") -> float:
    """Area under the precision-recall curve, macro or micro averaged.

    macro: unweighted mean of per-class AP over scoreable classes
    (ValueError if every class is skipped).  micro: all observed
    (score, label) pairs pooled into one ranked list (ValueError if the
    pool has no positives).
    """
    if mode == "macro":
        values, scoreable = per_class_average_precision(table)
        if not scoreable.any():
            raise ValueError("no class has both observed positives and negatives")
        return float(values[scoreable].mean())
    if mode == "micro":
        observed = table.labels.observed_mask
        if not observed.any():
            raise ValueError("no observed label entries to score")
        truth = table.labels.states[observed] == LabelState.POSITIVE
        return average_precision(table.scores[observed], truth)
    raise ValueError(f"mode must be 'macro' or 'micro', got {mode!r}")
