import numpy as np
import pytest

import pllearn as pl

_GATE_LINES = []


def record_gate(line):
    """Stash an acceptance-gate outcome for the end-of-run summary."""
    _GATE_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _GATE_LINES:
        terminalreporter.section("acceptance gate")
        for line in _GATE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def tiny_dataset():
    """60 clips, 3 classes, fully labeled, with a test split."""
    spec = pl.SyntheticSpec(
        num_clips=60, num_classes=3, frames_per_clip=5, embed_dim=6,
        seed=11, test_fraction=0.2,
    )
    dataset, _ = pl.generate_synthetic(spec)
    return dataset


def random_states(rng, n, c, p_missing=0.3):
    """Random tri-state label matrix with the given missing fraction."""
    states = rng.integers(0, 2, size=(n, c)).astype(np.int8)
    states[rng.random((n, c)) < p_missing] = -1
    return states


def brute_force_ap(scores, positives):
    """Step-wise AP by enumerating every distinct threshold, descending.

    Deliberately pure Python and structurally different from the library
    (no sorting of entries, no cumulative sums): at each threshold it
    rescans the whole list.  Arithmetic per step is the same int ratios,
    so agreement must be exact, not approximate.
    """
    npos = sum(positives)
    ap = 0.0
    recall_prev = 0.0
    for t in sorted(set(scores), reverse=True):
        selected = [p for s, p in zip(scores, positives) if s >= t]
        tp = sum(selected)
        precision = tp / len(selected)
        recall = tp / npos
        ap += (recall - recall_prev) * precision
        recall_prev = recall
    return ap


def small_params(rng, embed_dim=4, num_classes=2, num_layers=2, hidden=3):
    return pl.init_params(embed_dim, num_classes, num_layers, hidden,
                          seed=int(rng.integers(0, 2**31)))


def finite_difference_grads(loss_of, params, eps=1e-4):
    """Central finite differences of loss_of() over every parameter entry.

    loss_of must read the live params object; entries are perturbed in
    place and restored.
    """
    grads = params.zeros_like()
    for (_, theta), (_, g) in zip(params.named_tensors(), grads.named_tensors()):
        flat_theta = theta.ravel()
        flat_grad = g.ravel()
        for i in range(flat_theta.size):
            orig = flat_theta[i]
            flat_theta[i] = orig + eps
            up = loss_of()
            flat_theta[i] = orig - eps
            down = loss_of()
            flat_theta[i] = orig
            flat_grad[i] = (up - down) / (2 * eps)
    return grads


def max_grad_rel_error(analytic, fd, floor=1e-6):
    """(worst relative error, checked entries, total entries).

    Entries with analytic magnitude at or below the floor are excluded:
    the finite-difference oracle is invalid at ReLU kinks, which produce
    exactly-zero analytic entries with a spurious half-slope FD value.
    Callers should assert a healthy checked fraction so the filter cannot
    mask a dead-gradient bug.
    """
    worst = 0.0
    checked = 0
    total = 0
    for (_, a), (_, f) in zip(analytic.named_tensors(), fd.named_tensors()):
        keep = np.abs(a) > floor
        total += a.size
        checked += int(keep.sum())
        if keep.any():
            rel = np.abs(a - f)[keep] / np.abs(a)[keep]
            worst = max(worst, float(rel.max()))
    return worst, checked, total


def jitter_params(params, rng, scale=0.05):
    """Move every tensor off the init point (zero biases sit exactly on
    ReLU kinks when a frame's inputs are all zero, which poisons FD)."""
    for _, tensor in params.named_tensors():
        tensor += rng.uniform(-scale, scale, size=tensor.shape)
    return params
