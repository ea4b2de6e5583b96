"""Loss functions over clip probabilities, with closed-form gradients.

Every function returns ``(value, grad)`` where grad has the shape of the
probability input, so trainers can chain it straight into the network
backward pass.  Probabilities are clamped away from 0 and 1 before any log,
keeping both the value and the gradient finite.

Two supervision policies exist for partially labeled targets:

* full BCE treats every missing entry as negative (targets it with 0);
* masked BCE multiplies each entry's contribution by a binary mask and
  normalizes by the number of unmasked entries, so masked entries influence
  neither the value nor the gradient.
"""

from __future__ import annotations

import numpy as np

from .data import LabelState, PartialLabelMatrix

PROB_EPS = 1e-7


def _clamped(probs: np.ndarray) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)


def _targets_missing_as_negative(labels) -> np.ndarray:
    states = labels.states if isinstance(labels, PartialLabelMatrix) else np.asarray(labels)
    return (states == LabelState.POSITIVE).astype(np.float64)


def default_mask(labels) -> np.ndarray:
    """Binary mask that is 1 exactly on the observed entries."""
    states = labels.states if isinstance(labels, PartialLabelMatrix) else np.asarray(labels)
    return (states != LabelState.MISSING).astype(np.float64)


def bce_full(probs: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Binary cross-entropy averaged over every (clip, class) entry.

    Missing entries are treated as negatives.  This is the training signal
    for the missing-as-negative baseline and for the enhancing teacher.
    """
    p = _clamped(probs)
    y = _targets_missing_as_negative(labels)
    if p.shape != y.shape:
        raise ValueError(f"probs shape {p.shape} does not match labels {y.shape}")
    n = p.size
    value = float(-(y * np.log(p) + (1.0 - y) * np.log1p(-p)).sum() / n)
    grad = (p - y) / (p * (1.0 - p)) / n
    return value, grad


def bce_masked(
    probs: np.ndarray, labels, mask: np.ndarray | None = None
) -> tuple[float, np.ndarray]:
    """BCE restricted to entries where ``mask`` is 1, averaged over them.

    ``mask=None`` masks exactly the missing entries.  An explicit mask must
    never re-weight an entry, only include (1) or exclude (0) it; values
    other than 0/1 are rejected.  If the mask excludes everything the loss
    is 0 with a zero gradient.
    """
    p = _clamped(probs)
    y = _targets_missing_as_negative(labels)
    if p.shape != y.shape:
        raise ValueError(f"probs shape {p.shape} does not match labels {y.shape}")
    if mask is None:
        m = default_mask(labels)
    else:
        m = np.asarray(mask, dtype=np.float64)
        if m.shape != p.shape:
            raise ValueError(f"mask shape {m.shape} does not match probs {p.shape}")
        if not np.isin(m, (0.0, 1.0)).all():
            raise ValueError("mask entries must be 0 or 1")
    count = m.sum()
    if count == 0:
        return 0.0, np.zeros_like(p)
    value = float(-(m * (y * np.log(p) + (1.0 - y) * np.log1p(-p))).sum() / count)
    grad = m * (p - y) / (p * (1.0 - p)) / count
    return value, grad


def consistency_mse(
    student_probs: np.ndarray, teacher_probs: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean squared difference between student and teacher clip outputs.

    The gradient is wrt the student only; the teacher is a constant target.
    """
    s = np.asarray(student_probs, dtype=np.float64)
    t = np.asarray(teacher_probs, dtype=np.float64)
    if s.shape != t.shape:
        raise ValueError(f"student shape {s.shape} does not match teacher {t.shape}")
    n = s.size
    diff = s - t
    value = float((diff * diff).sum() / n)
    grad = 2.0 * diff / n
    return value, grad


def combined_loss(
    student_probs: np.ndarray,
    teacher_probs: np.ndarray,
    labels,
    beta: float,
    mask: np.ndarray | None = None,
) -> tuple[float, np.ndarray, float, float]:
    """Masked BCE plus beta times the consistency term.

    Returns ``(total, grad, supervised, consistency)``; grad is wrt the
    student probabilities.
    """
    sup, sup_grad = bce_masked(student_probs, labels, mask)
    cons, cons_grad = consistency_mse(student_probs, teacher_probs)
    total = sup + beta * cons
    grad = sup_grad if beta == 0 else sup_grad + beta * cons_grad
    return total, grad, sup, cons
