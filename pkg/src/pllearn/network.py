"""Attention-based multiple-instance-learning classifier.

A clip is a bag of T embedding frames.  The net is a stack of ReLU hidden
layers (with inverted dropout during training), followed by two linear heads
on the shared hidden features:

* classifier head -> sigmoid -> per-frame class probabilities (T x C)
* attention head  -> softmax over the T frames, per class   (T x C)

The clip probability for class c is the attention-weighted mean of the frame
probabilities, so it always lies between the min and max frame probability.

Gradients are computed in closed form by :func:`backward`, reusing the exact
dropout masks drawn in the forward pass, so the stochastic pass is
differentiated as realized.  All math is float64 internally; the checkpoint
format stores float32.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from .data import EmbeddingSequence

CHECKPOINT_MAGIC = b"PLLNET01"


@dataclass(frozen=True)
class NoiseSpec:
    """Dropout configuration: rate plus the RNG entropy for the masks.

    ``seed`` may be an int or a tuple of ints (fed to numpy's SeedSequence),
    which lets callers derive independent per-clip streams.  The same
    NoiseSpec always reproduces the same masks.
    """

    dropout_rate: float
    seed: int | tuple[int, ...] = 0

    def __post_init__(self):
        if not 0 <= self.dropout_rate < 1:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")


@dataclass
class AttentionMILParams:
    """All trainable weights of the classifier.

    Hidden layer l maps H_in -> hidden (H_in is embed_dim for l=0); both heads
    map hidden -> num_classes.  The same container shape is used for
    gradients.
    """

    hidden_weights: list[np.ndarray]
    hidden_biases: list[np.ndarray]
    classifier_weight: np.ndarray
    classifier_bias: np.ndarray
    attention_weight: np.ndarray
    attention_bias: np.ndarray

    def __post_init__(self):
        if len(self.hidden_weights) != len(self.hidden_biases):
            raise ValueError("hidden weights/biases count mismatch")
        if not self.hidden_weights:
            raise ValueError("at least one hidden layer is required")
        h = self.hidden_weights[0].shape[1]
        for l, (w, b) in enumerate(zip(self.hidden_weights, self.hidden_biases)):
            expect_in = self.embed_dim if l == 0 else h
            if w.shape != (expect_in, h) or b.shape != (h,):
                raise ValueError(f"hidden layer {l} has inconsistent shapes")
        c = self.classifier_weight.shape[1]
        if self.classifier_weight.shape != (h, c) or self.classifier_bias.shape != (c,):
            raise ValueError("classifier head has inconsistent shapes")
        if self.attention_weight.shape != (h, c) or self.attention_bias.shape != (c,):
            raise ValueError("attention head has inconsistent shapes")
        for name, tensor in self.named_tensors():
            if not np.isfinite(tensor).all():
                raise ValueError(f"non-finite value in tensor {name}")

    @property
    def num_layers(self) -> int:
        return len(self.hidden_weights)

    @property
    def hidden_size(self) -> int:
        return self.hidden_weights[0].shape[1]

    @property
    def num_classes(self) -> int:
        return self.classifier_weight.shape[1]

    @property
    def embed_dim(self) -> int:
        return self.hidden_weights[0].shape[0]

    @property
    def dims(self) -> tuple[int, int, int, int]:
        """(num_layers, hidden_size, num_classes, embed_dim)."""
        return (self.num_layers, self.hidden_size, self.num_classes, self.embed_dim)

    def named_tensors(self):
        """(name, array) pairs in fixed declaration order."""
        pairs = []
        for l, (w, b) in enumerate(zip(self.hidden_weights, self.hidden_biases)):
            pairs.append((f"hidden{l}_weight", w))
            pairs.append((f"hidden{l}_bias", b))
        pairs.append(("classifier_weight", self.classifier_weight))
        pairs.append(("classifier_bias", self.classifier_bias))
        pairs.append(("attention_weight", self.attention_weight))
        pairs.append(("attention_bias", self.attention_bias))
        return pairs

    def copy(self) -> "AttentionMILParams":
        return AttentionMILParams(
            [w.copy() for w in self.hidden_weights],
            [b.copy() for b in self.hidden_biases],
            self.classifier_weight.copy(),
            self.classifier_bias.copy(),
            self.attention_weight.copy(),
            self.attention_bias.copy(),
        )

    def zeros_like(self) -> "AttentionMILParams":
        return AttentionMILParams(
            [np.zeros_like(w) for w in self.hidden_weights],
            [np.zeros_like(b) for b in self.hidden_biases],
            np.zeros_like(self.classifier_weight),
            np.zeros_like(self.classifier_bias),
            np.zeros_like(self.attention_weight),
            np.zeros_like(self.attention_bias),
        )

    def add_(self, other: "AttentionMILParams") -> "AttentionMILParams":
        """In-place elementwise add (gradient accumulation)."""
        for (_, a), (_, b) in zip(self.named_tensors(), other.named_tensors()):
            a += b
        return self

    def digest(self) -> str:
        """SHA-256 over shapes and raw float64 bytes, for trajectory audits."""
        h = hashlib.sha256()
        for name, tensor in self.named_tensors():
            h.update(name.encode())
            h.update(str(tensor.shape).encode())
            h.update(np.ascontiguousarray(tensor, dtype="<f8").tobytes())
        return h.hexdigest()


def init_params(
    embed_dim: int, num_classes: int, num_layers: int, hidden_size: int, seed: int
) -> AttentionMILParams:
    """Glorot-uniform weights, zero biases; deterministic per seed."""
    if min(embed_dim, num_classes, num_layers, hidden_size) < 1:
        raise ValueError("all dimensions must be >= 1")
    rng = np.random.default_rng(seed)

    def glorot(fan_in, fan_out):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=(fan_in, fan_out))

    hidden_weights, hidden_biases = [], []
    for l in range(num_layers):
        fan_in = embed_dim if l == 0 else hidden_size
        hidden_weights.append(glorot(fan_in, hidden_size))
        hidden_biases.append(np.zeros(hidden_size))
    return AttentionMILParams(
        hidden_weights,
        hidden_biases,
        glorot(hidden_size, num_classes),
        np.zeros(num_classes),
        glorot(hidden_size, num_classes),
        np.zeros(num_classes),
    )


def draw_dropout_masks(noise: NoiseSpec, num_layers: int, num_frames: int, hidden_size: int):
    """Per-layer boolean keep masks, deterministic for a given NoiseSpec."""
    rng = np.random.default_rng(noise.seed)
    return [
        rng.random((num_frames, hidden_size)) >= noise.dropout_rate
        for _ in range(num_layers)
    ]


@dataclass
class BatchTrace:
    """Cached activations for a batch forward pass (backward needs them)."""

    layer_inputs: list[np.ndarray]  # input to each hidden layer, (B, T, H_in)
    pre_activations: list[np.ndarray]  # (B, T, H) per layer
    keep_masks: list[np.ndarray] | None  # (B, T, H) per layer, or None
    dropout_rate: float
    hidden: np.ndarray  # final hidden features (B, T, H)
    instance_probs: np.ndarray  # (B, T, C)
    attention_weights: np.ndarray  # (B, T, C), sums to 1 over T
    clip_probs: np.ndarray  # (B, C)
    dims: tuple[int, int, int, int]


@dataclass
class ForwardTrace:
    """Single-clip view of a forward pass."""

    clip_probs: np.ndarray  # (C,)
    instance_probs: np.ndarray  # (T, C)
    attention_weights: np.ndarray  # (T, C)
    batch: BatchTrace = field(repr=False)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def forward_batch(
    params: AttentionMILParams,
    frames: np.ndarray,
    keep_masks=None,
    dropout_rate: float = 0.0,
) -> BatchTrace:
    """Forward pass over a (B, T, D) batch of equal-length clips.

    ``keep_masks`` is a list of (B, T, H) boolean arrays, one per hidden
    layer; None disables dropout (inference).  Inverted dropout scales kept
    units by 1/(1-rate) so inference needs no rescaling.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 3:
        raise ValueError(f"expected (B, T, D) batch, got shape {frames.shape}")
    if frames.shape[2] != params.embed_dim:
        raise ValueError(
            f"embedding dim {frames.shape[2]} does not match model dim {params.embed_dim}"
        )
    scale = 1.0 / (1.0 - dropout_rate) if keep_masks is not None else 1.0

    h = frames
    layer_inputs, pre_activations = [], []
    for l, (w, b) in enumerate(zip(params.hidden_weights, params.hidden_biases)):
        layer_inputs.append(h)
        z = h @ w + b
        pre_activations.append(z)
        h = np.maximum(z, 0.0)
        if keep_masks is not None:
            h = h * keep_masks[l] * scale

    instance_logits = h @ params.classifier_weight + params.classifier_bias
    instance_probs = _sigmoid(instance_logits)

    attention_logits = h @ params.attention_weight + params.attention_bias
    attention_logits = attention_logits - attention_logits.max(axis=1, keepdims=True)
    exp = np.exp(attention_logits)
    attention_weights = exp / exp.sum(axis=1, keepdims=True)

    clip_probs = (attention_weights * instance_probs).sum(axis=1)
    return BatchTrace(
        layer_inputs,
        pre_activations,
        keep_masks,
        dropout_rate,
        h,
        instance_probs,
        attention_weights,
        clip_probs,
        params.dims,
    )


def backward_batch(
    params: AttentionMILParams, trace: BatchTrace, clip_prob_grads: np.ndarray
) -> AttentionMILParams:
    """Exact gradient of sum_b loss_b wrt params, given dloss/dclip_probs.

    Reuses the dropout masks stored in the trace, so the realized stochastic
    forward pass is what gets differentiated.
    """
    if trace.dims != params.dims:
        raise ValueError(
            f"trace was produced for dims {trace.dims}, params have {params.dims}"
        )
    g = np.asarray(clip_prob_grads, dtype=np.float64)
    if g.shape != trace.clip_probs.shape:
        raise ValueError(
            f"gradient shape {g.shape} does not match clip_probs {trace.clip_probs.shape}"
        )
    w_att = trace.attention_weights
    p = trace.instance_probs

    # clip_prob[b, c] = sum_t w[b, t, c] * p[b, t, c]
    d_instance = g[:, None, :] * w_att * p * (1.0 - p)  # through sigmoid
    # softmax over frames: dv = w * g * (p - clip_prob)
    d_attention = w_att * g[:, None, :] * (p - trace.clip_probs[:, None, :])

    h = trace.hidden
    grad_cls_w = np.einsum("bth,btc->hc", h, d_instance)
    grad_cls_b = d_instance.sum(axis=(0, 1))
    grad_att_w = np.einsum("bth,btc->hc", h, d_attention)
    grad_att_b = d_attention.sum(axis=(0, 1))

    d_hidden = d_instance @ params.classifier_weight.T + d_attention @ params.attention_weight.T

    grad_hw = [None] * params.num_layers
    grad_hb = [None] * params.num_layers
    scale = 1.0 / (1.0 - trace.dropout_rate) if trace.keep_masks is not None else 1.0
    for l in range(params.num_layers - 1, -1, -1):
        if trace.keep_masks is not None:
            d_hidden = d_hidden * trace.keep_masks[l] * scale
        d_pre = d_hidden * (trace.pre_activations[l] > 0)
        grad_hw[l] = np.einsum("bti,bth->ih", trace.layer_inputs[l], d_pre)
        grad_hb[l] = d_pre.sum(axis=(0, 1))
        d_hidden = d_pre @ params.hidden_weights[l].T

    return AttentionMILParams(
        grad_hw, grad_hb, grad_cls_w, grad_cls_b, grad_att_w, grad_att_b
    )


def _frames_of(sequence) -> np.ndarray:
    if isinstance(sequence, EmbeddingSequence):
        return sequence.frames
    return np.asarray(sequence)


def forward(
    params: AttentionMILParams,
    sequence,
    noise: NoiseSpec | None = None,
    training: bool = False,
) -> ForwardTrace:
    """Forward pass over one clip (an EmbeddingSequence or a (T, D) array).

    With ``training=True`` and a NoiseSpec with nonzero rate, inverted
    dropout is applied after each hidden activation; otherwise the pass is
    deterministic.
    """
    frames = _frames_of(sequence)
    if frames.ndim != 2:
        raise ValueError(f"expected a (T, D) sequence, got shape {frames.shape}")
    masks = None
    rate = 0.0
    if training and noise is not None and noise.dropout_rate > 0:
        rate = noise.dropout_rate
        per_clip = draw_dropout_masks(
            noise, params.num_layers, frames.shape[0], params.hidden_size
        )
        masks = [m[None] for m in per_clip]
    trace = forward_batch(params, frames[None], masks, rate)
    return ForwardTrace(
        trace.clip_probs[0], trace.instance_probs[0], trace.attention_weights[0], trace
    )


def backward(
    params: AttentionMILParams, trace: ForwardTrace, loss_grad: np.ndarray
) -> AttentionMILParams:
    """Gradient wrt params for a single-clip trace and dloss/dclip_probs."""
    g = np.asarray(loss_grad, dtype=np.float64)
    if g.shape != trace.clip_probs.shape:
        raise ValueError(
            f"loss gradient shape {g.shape} does not match clip_probs {trace.clip_probs.shape}"
        )
    return backward_batch(params, trace.batch, g[None])


def predict(params: AttentionMILParams, sequence) -> np.ndarray:
    """Inference-mode clip probabilities (dropout off, deterministic)."""
    return forward(params, sequence, noise=None, training=False).clip_probs


def save_params(params: AttentionMILParams, path) -> None:
    """Checkpoint: magic, u32 (L, H, C, D) header, float32 tensors in order."""
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<IIII", *params.dims))
        for _, tensor in params.named_tensors():
            f.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())


def load_params(path) -> AttentionMILParams:
    with open(path, "rb") as f:
        data = f.read()
    offset = len(CHECKPOINT_MAGIC)
    magic = data[:offset]
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(
            f"bad magic in {path}: expected {CHECKPOINT_MAGIC!r}, got {magic!r}"
        )
    if len(data) < offset + 16:
        raise ValueError(f"unexpected end of file in {path}")
    num_layers, hidden, num_classes, embed_dim = struct.unpack_from("<IIII", data, offset)
    offset += 16

    def take(shape):
        nonlocal offset
        count = int(np.prod(shape))
        end = offset + count * 4
        if end > len(data):
            raise ValueError(f"unexpected end of file in {path}")
        arr = np.frombuffer(data[offset:end], dtype="<f4").astype(np.float64).reshape(shape)
        offset = end
        return arr

    hidden_weights, hidden_biases = [], []
    for l in range(num_layers):
        fan_in = embed_dim if l == 0 else hidden
        hidden_weights.append(take((fan_in, hidden)))
        hidden_biases.append(take((hidden,)))
    params = AttentionMILParams(
        hidden_weights,
        hidden_biases,
        take((hidden, num_classes)),
        take((num_classes,)),
        take((hidden, num_classes)),
        take((num_classes,)),
    )
    if offset != len(data):
        raise ValueError(f"{len(data) - offset} trailing bytes in {path}")
    return params
