"""Adam with decoupled weight decay, and the exponential moving average.

The decay term is applied directly to the weights rather than folded into
the gradient, so it does not pass through the adaptive scaling:

    theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)

The EMA keeps a shadow copy of the parameters updated after every optimizer
step as ``shadow <- alpha * shadow + (1 - alpha) * theta``, which contracts
|shadow - theta| by exactly alpha per update when theta is held fixed.

Optimizer state (step count plus float64 m and v moments) round-trips
through a small binary format so training can resume exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .network import AttentionMILParams

ADAM_STATE_MAGIC = b"PLLADM01"


@dataclass
class AdamState:
    """First/second moment estimates and the shared step counter."""

    step: int
    m: AttentionMILParams
    v: AttentionMILParams

    @classmethod
    def init(cls, params: AttentionMILParams) -> "AdamState":
        return cls(0, params.zeros_like(), params.zeros_like())


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise ValueError("betas must be in [0, 1)")
        if self.eps <= 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")


def adam_step(
    params: AttentionMILParams,
    grads: AttentionMILParams,
    state: AdamState,
    config: AdamConfig,
) -> tuple[AttentionMILParams, AdamState]:
    """One in-place Adam update; returns the mutated (params, state).

    Raises ValueError naming the offending tensor if any gradient is
    non-finite, leaving params and state untouched.
    """
    for name, g in grads.named_tensors():
        if not np.isfinite(g).all():
            raise ValueError(f"non-finite gradient in tensor {name}")
    state.step += 1
    t = state.step
    bc1 = 1.0 - config.beta1**t
    bc2 = 1.0 - config.beta2**t
    tensors = zip(params.named_tensors(), grads.named_tensors(),
                  state.m.named_tensors(), state.v.named_tensors())
    for (_, theta), (_, g), (_, m), (_, v) in tensors:
        m *= config.beta1
        m += (1.0 - config.beta1) * g
        v *= config.beta2
        v += (1.0 - config.beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + config.eps)
        if config.weight_decay:
            update = update + config.weight_decay * theta
        theta -= config.lr * update
    return params, state


def ema_update(
    shadow: AttentionMILParams, params: AttentionMILParams, alpha: float
) -> AttentionMILParams:
    """shadow <- alpha * shadow + (1 - alpha) * params, in place."""
    if not 0 <= alpha <= 1:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    for (_, s), (_, p) in zip(shadow.named_tensors(), params.named_tensors()):
        s *= alpha
        s += (1.0 - alpha) * p
    return shadow


def save_adam_state(state: AdamState, path) -> None:
    """Binary layout: magic, u64 step, u32 (L, H, C, D), float64 m then v."""
    with open(path, "wb") as f:
        f.write(ADAM_STATE_MAGIC)
        f.write(struct.pack("<Q", state.step))
        f.write(struct.pack("<IIII", *state.m.dims))
        for moments in (state.m, state.v):
            for _, tensor in moments.named_tensors():
                f.write(np.ascontiguousarray(tensor, dtype="<f8").tobytes())


def load_adam_state(path) -> AdamState:
    with open(path, "rb") as f:
        data = f.read()
    offset = len(ADAM_STATE_MAGIC)
    if data[:offset] != ADAM_STATE_MAGIC:
        raise ValueError(
            f"bad magic in {path}: expected {ADAM_STATE_MAGIC!r}, got {data[:offset]!r}"
        )
    if len(data) < offset + 8 + 16:
        raise ValueError(f"unexpected end of file in {path}")
    (step,) = struct.unpack_from("<Q", data, offset)
    offset += 8
    num_layers, hidden, num_classes, embed_dim = struct.unpack_from("<IIII", data, offset)
    offset += 16

    def take(shape):
        nonlocal offset
        count = int(np.prod(shape))
        end = offset + count * 8
        if end > len(data):
            raise ValueError(f"unexpected end of file in {path}")
        arr = np.frombuffer(data[offset:end], dtype="<f8").reshape(shape).copy()
        offset = end
        return arr

    def read_moments():
        hidden_weights, hidden_biases = [], []
        for l in range(num_layers):
            fan_in = embed_dim if l == 0 else hidden
            hidden_weights.append(take((fan_in, hidden)))
            hidden_biases.append(take((hidden,)))
        return AttentionMILParams(
            hidden_weights,
            hidden_biases,
            take((hidden, num_classes)),
            take((num_classes,)),
            take((hidden, num_classes)),
            take((num_classes,)),
        )

    m = read_moments()
    v = read_moments()
    if offset != len(data):
        raise ValueError(f"{len(data) - offset} trailing bytes in {path}")
    return AdamState(step, m, v)
