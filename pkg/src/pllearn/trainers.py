"""Training loops for the supervision policies over partial labels.

Four methods share one mini-batch loop:

* B0: missing labels treated as negatives (full BCE);
* B1: missing labels excluded from the loss (masked BCE);
* LE: B1 on an enhanced mask (driven by the `enhance` module);
* MT: Mean Teacher — masked BCE plus a consistency term against an
  exponential-moving-average teacher, each model seeing independent
  dropout noise.

Reproducibility: all randomness flows from ``config.seed`` through named
streams (shuffle / student noise / teacher noise), so a fixed config gives a
bit-identical parameter trajectory.  The streams are independent, which is
what lets MT with beta=0, alpha=0 retrace B1 exactly: the teacher's noise
draws never touch the student's stream.

Model selection picks the epoch with the lowest validation loss (first epoch
on ties), computed with dropout off under the same label policy as training;
the returned parameters are a snapshot from that epoch.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import Dataset
from .losses import bce_full, bce_masked, combined_loss, default_mask
from .metrics import EvalTable, auprc, macro_f1
from .network import (
    AttentionMILParams,
    NoiseSpec,
    draw_dropout_masks,
    forward_batch,
    backward_batch,
    init_params,
)
from .optim import AdamConfig, AdamState, adam_step, ema_update

VALID_METHODS = ("B0", "B1", "LE", "MT")

# Named RNG streams derived from config.seed.
_STREAM_SHUFFLE = 0
_STREAM_STUDENT = 1
_STREAM_TEACHER = 2


class TrainingDiverged(RuntimeError):
    """Raised when a batch loss turns non-finite."""

    def __init__(self, epoch: int, batch: int, value: float):
        super().__init__(f"non-finite loss {value} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.value = value


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training run.

    alpha/beta apply to MT only, gamma to LE only; they are carried (and
    ignored) by the other methods so one config can drive a method sweep.
    """

    method: str
    epochs: int = 100
    batch_size: int = 64
    lr: float = 1e-3
    weight_decay: float = 1e-5
    dropout_rate: float = 0.6
    num_layers: int = 3
    hidden_size: int = 128
    seed: int = 0
    alpha: float = 0.999
    beta: float = 3.0
    gamma: float = 10.0
    eval_model: str = "teacher"
    patience: int = 20

    def __post_init__(self):
        if self.method not in VALID_METHODS:
            raise ValueError(f"method must be one of {VALID_METHODS}, got {self.method!r}")
        for name in ("epochs", "batch_size", "num_layers", "hidden_size", "patience"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if not 0 <= self.alpha <= 1:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if not 0 <= self.gamma <= 100:
            raise ValueError(f"gamma must be in [0, 100], got {self.gamma}")
        if self.eval_model not in ("student", "teacher"):
            raise ValueError(f"eval_model must be 'student' or 'teacher', got {self.eval_model!r}")

    def replace(self, **changes) -> "TrainConfig":
        merged = {**asdict(self), **changes}
        return TrainConfig(**merged)


@dataclass
class TrainReport:
    """Per-epoch history plus the selection outcome of one run."""

    config: TrainConfig
    train_losses: list[float]
    val_losses: list[float]
    selected_epoch: int
    final_metrics: dict[str, float]
    wall_ms: float
    param_digests: list[str] = field(default_factory=list)
    teacher_digests: list[str] = field(default_factory=list)
    consistency_losses: list[float] = field(default_factory=list)

    @property
    def epochs_run(self) -> int:
        return len(self.train_losses)

    def to_json(self) -> str:
        payload = {
            "method": self.config.method,
            "config": asdict(self.config),
            "epochs": [
                {"epoch": i, "train_loss": t, "val_loss": v}
                for i, (t, v) in enumerate(zip(self.train_losses, self.val_losses))
            ],
            "selected": self.selected_epoch,
            "wall_ms": self.wall_ms,
            "final_metrics": self.final_metrics,
            "param_digests": self.param_digests,
        }
        if self.teacher_digests:
            payload["teacher_digests"] = self.teacher_digests
        if self.consistency_losses:
            payload["consistency_losses"] = self.consistency_losses
        return json.dumps(payload, indent=2, sort_keys=True)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json())
            f.write("\n")


def _float_frames(dataset: Dataset) -> list[np.ndarray]:
    return [np.asarray(e.frames, dtype=np.float64) for e in dataset.embeddings]


def _group_positions_by_length(lengths: list[int]) -> list[np.ndarray]:
    """Partition batch positions into runs of equal frame count."""
    groups: dict[int, list[int]] = {}
    for pos, t in enumerate(lengths):
        groups.setdefault(t, []).append(pos)
    return [np.asarray(v, dtype=np.intp) for v in groups.values()]


def predict_dataset(
    params: AttentionMILParams, dataset: Dataset, chunk: int = 256
) -> np.ndarray:
    """Inference-mode clip probabilities for every clip, shape (N, C)."""
    frames = _float_frames(dataset)
    scores = np.empty((dataset.num_clips, params.num_classes))
    groups = _group_positions_by_length([f.shape[0] for f in frames])
    for positions in groups:
        for start in range(0, positions.size, chunk):
            block = positions[start : start + chunk]
            stacked = np.stack([frames[i] for i in block])
            scores[block] = forward_batch(params, stacked).clip_probs
    return scores


def evaluate(
    params: AttentionMILParams,
    dataset: Dataset,
    metrics_spec: tuple[str, ...] = ("macro_f1", "auprc_macro", "auprc_micro"),
) -> dict[str, float]:
    """Score a dataset's observed labels with the requested metrics."""
    known = {"macro_f1", "auprc_macro", "auprc_micro"}
    unknown = set(metrics_spec) - known
    if unknown:
        raise ValueError(f"unknown metrics {sorted(unknown)}; expected subset of {sorted(known)}")
    table = EvalTable(predict_dataset(params, dataset), dataset.labels)
    out = {}
    for name in metrics_spec:
        if name == "macro_f1":
            out[name] = macro_f1(table)[0]
        else:
            out[name] = auprc(table, mode=name.removeprefix("auprc_"))
    return out


def _batch_forward(
    params: AttentionMILParams,
    frames: list[np.ndarray],
    batch_indices: np.ndarray,
    config: TrainConfig,
    stream: int,
    epoch: int,
    batch_idx: int,
):
    """Forward one mini-batch with per-clip dropout noise.

    Returns (probs (B, C), group traces) where each trace carries the batch
    positions it covers, for the matching backward pass.
    """
    lengths = [frames[i].shape[0] for i in batch_indices]
    probs = np.empty((batch_indices.size, params.num_classes))
    traces = []
    use_noise = config.dropout_rate > 0
    for positions in _group_positions_by_length(lengths):
        stacked = np.stack([frames[batch_indices[p]] for p in positions])
        masks = None
        if use_noise:
            per_layer = [[] for _ in range(params.num_layers)]
            for p in positions:
                noise = NoiseSpec(
                    config.dropout_rate,
                    seed=(config.seed, stream, epoch, batch_idx, int(p)),
                )
                clip_masks = draw_dropout_masks(
                    noise, params.num_layers, stacked.shape[1], params.hidden_size
                )
                for l, m in enumerate(clip_masks):
                    per_layer[l].append(m)
            masks = [np.stack(layer) for layer in per_layer]
        trace = forward_batch(
            params, stacked, masks, config.dropout_rate if use_noise else 0.0
        )
        probs[positions] = trace.clip_probs
        traces.append((positions, trace))
    return probs, traces


def _batch_backward(
    params: AttentionMILParams, traces, prob_grads: np.ndarray
) -> AttentionMILParams:
    grads = params.zeros_like()
    for positions, trace in traces:
        grads.add_(backward_batch(params, trace, prob_grads[positions]))
    return grads


def _validation_loss(
    params: AttentionMILParams, val_set: Dataset, method: str
) -> float:
    probs = predict_dataset(params, val_set)
    if method == "B0":
        return bce_full(probs, val_set.labels)[0]
    return bce_masked(probs, val_set.labels)[0]


def _train_loop(
    config: TrainConfig,
    train_set: Dataset,
    val_set: Dataset,
    use_teacher: bool,
    train_mask: np.ndarray | None,
):
    """Shared epoch loop; returns (params, teacher, report)."""
    if train_set.num_clips < 1 or val_set.num_clips < 1:
        raise ValueError("train and validation sets must be non-empty")
    if train_set.num_classes != val_set.num_classes:
        raise ValueError("train and validation sets disagree on classes")
    if train_mask is not None:
        train_mask = np.asarray(train_mask, dtype=np.float64)
        if train_mask.shape != train_set.labels.states.shape:
            raise ValueError(
                f"train mask shape {train_mask.shape} does not match labels "
                f"{train_set.labels.states.shape}"
            )

    start = time.perf_counter()
    frames = _float_frames(train_set)
    states = train_set.labels.states
    n = train_set.num_clips

    params = init_params(
        train_set.embed_dim,
        train_set.num_classes,
        config.num_layers,
        config.hidden_size,
        config.seed,
    )
    teacher = params.copy() if use_teacher else None
    adam_cfg = AdamConfig(lr=config.lr, weight_decay=config.weight_decay)
    adam_state = AdamState.init(params)
    shuffle_rng = np.random.default_rng((config.seed, _STREAM_SHUFFLE))

    train_losses: list[float] = []
    val_losses: list[float] = []
    cons_losses: list[float] = []
    digests: list[str] = []
    teacher_digests: list[str] = []
    best_val = np.inf
    best_epoch = -1
    best_params = None
    best_teacher = None
    since_best = 0

    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        loss_sum = 0.0
        cons_sum = 0.0
        for batch_idx, lo in enumerate(range(0, n, config.batch_size)):
            batch = order[lo : lo + config.batch_size]
            batch_states = states[batch]
            batch_mask = train_mask[batch] if train_mask is not None else None

            probs, traces = _batch_forward(
                params, frames, batch, config, _STREAM_STUDENT, epoch, batch_idx
            )
            if use_teacher:
                teacher_probs, _ = _batch_forward(
                    teacher, frames, batch, config, _STREAM_TEACHER, epoch, batch_idx
                )
                loss, grad, _sup, cons = combined_loss(
                    probs, teacher_probs, batch_states, config.beta, batch_mask
                )
                cons_sum += cons * batch.size
            elif config.method == "B0":
                loss, grad = bce_full(probs, batch_states)
            else:
                loss, grad = bce_masked(probs, batch_states, batch_mask)
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, batch_idx, loss)
            loss_sum += loss * batch.size

            grads = _batch_backward(params, traces, grad)
            adam_step(params, grads, adam_state, adam_cfg)
            if use_teacher:
                ema_update(teacher, params, config.alpha)

        train_losses.append(loss_sum / n)
        if use_teacher:
            cons_losses.append(cons_sum / n)
        digests.append(params.digest())
        if use_teacher:
            teacher_digests.append(teacher.digest())

        eval_params = teacher if (use_teacher and config.eval_model == "teacher") else params
        val = _validation_loss(eval_params, val_set, config.method)
        if not np.isfinite(val):
            raise TrainingDiverged(epoch, -1, val)
        val_losses.append(val)
        if val < best_val:
            best_val = val
            best_epoch = epoch
            best_params = params.copy()
            best_teacher = teacher.copy() if use_teacher else None
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break

    wall_ms = (time.perf_counter() - start) * 1000.0
    final_params = best_teacher if (use_teacher and config.eval_model == "teacher") else best_params
    final_metrics = {"val_loss": float(best_val)}
    try:
        final_metrics.update(evaluate(final_params, val_set, ("macro_f1",)))
    except ValueError:
        pass
    report = TrainReport(
        config=config,
        train_losses=train_losses,
        val_losses=val_losses,
        selected_epoch=best_epoch,
        final_metrics=final_metrics,
        wall_ms=wall_ms,
        param_digests=digests,
        teacher_digests=teacher_digests,
        consistency_losses=cons_losses,
    )
    return best_params, best_teacher, report


def train_baseline(
    config: TrainConfig,
    train_set: Dataset,
    val_set: Dataset,
    train_mask: np.ndarray | None = None,
) -> tuple[AttentionMILParams, TrainReport]:
    """Train with B0 (missing as negative) or B1 (missing masked out).

    ``train_mask`` optionally replaces B1's default observed-entries mask
    (the enhancing pipeline passes its own); it is rejected for B0, which by
    definition uses every entry.
    """
    if config.method not in ("B0", "B1"):
        raise ValueError(f"train_baseline handles B0/B1, got {config.method!r}")
    if config.method == "B0" and train_mask is not None:
        raise ValueError("B0 uses the full loss; a train mask is meaningless")
    params, _, report = _train_loop(
        config, train_set, val_set, use_teacher=False, train_mask=train_mask
    )
    return params, report


def train_mean_teacher(
    config: TrainConfig, train_set: Dataset, val_set: Dataset
) -> tuple[AttentionMILParams, AttentionMILParams, TrainReport]:
    """Mean Teacher: masked BCE + beta * consistency, EMA teacher.

    Per batch the student and teacher each apply independent dropout noise;
    the consistency term covers every clip in the batch.  Only the student
    receives Adam updates; the teacher moves by EMA after every step.
    Returns (student, teacher, report), snapshots from the selected epoch.
    """
    if config.method != "MT":
        raise ValueError(f"train_mean_teacher requires method 'MT', got {config.method!r}")
    student, teacher, report = _train_loop(
        config, train_set, val_set, use_teacher=True, train_mask=None
    )
    return student, teacher, report
