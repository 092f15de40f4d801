"""A small, explicit neural-network toolkit in numpy.

Every layer is a forward function plus a matching backward function; callers keep
whatever the backward pass needs. All arithmetic is float64.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidArgument

PROB_CLAMP = 1e-12


@dataclass
class RealTensor:
    """A parameter array with a gradient slot of the same shape."""

    values: np.ndarray
    grad: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.grad is not None and np.shape(self.grad) != self.values.shape:
            raise InvalidArgument("gradient shape must match values shape")

    @property
    def shape(self):
        return self.values.shape

    def zero_grad(self):
        self.grad = np.zeros_like(self.values)


# ------------------------------------------------------------------ dense / relu

def dense_forward(w, b, x):
    w, b, x = (np.asarray(a, dtype=float) for a in (w, b, x))
    if w.ndim != 2 or b.shape != (w.shape[0],) or x.ndim != 2 or x.shape[1] != w.shape[1]:
        raise InvalidArgument(
            f"dense shapes disagree: w {w.shape}, b {b.shape}, x {x.shape}"
        )
    return x @ w.T + b


def dense_backward(w, x, dy):
    """Returns (dw, db, dx)."""
    return dy.T @ x, dy.sum(axis=0), dy @ w


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(x, dy):
    return np.where(x > 0, dy, 0.0)


# ------------------------------------------------------------------ convolution

def conv2d_forward(kernels, x, bias=None):
    """Valid cross-correlation, stride 1.

    kernels: (out_c, in_c, kh, kw); x: (batch, in_c, H, W).
    """
    kernels = np.asarray(kernels, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.ndim != 4 or kernels.ndim != 4 or x.shape[1] != kernels.shape[1]:
        raise InvalidArgument(f"conv shapes disagree: kernels {kernels.shape}, x {x.shape}")
    kh, kw = kernels.shape[2:]
    if x.shape[2] < kh or x.shape[3] < kw:
        raise InvalidArgument(f"input {x.shape[2:]} smaller than kernel {(kh, kw)}")
    patches = sliding_window_view(x, (kh, kw), axis=(2, 3))  # (B, C, H', W', kh, kw)
    out = np.einsum("bchwij,ocij->bohw", patches, kernels, optimize=True)
    if bias is not None:
        out += np.asarray(bias, dtype=float)[None, :, None, None]
    return out


def conv2d_backward(kernels, x, dy):
    """Returns (dkernels, dbias, dx)."""
    kh, kw = kernels.shape[2:]
    patches = sliding_window_view(x, (kh, kw), axis=(2, 3))
    dk = np.einsum("bchwij,bohw->ocij", patches, dy, optimize=True)
    db = dy.sum(axis=(0, 2, 3))
    padded = np.pad(dy, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))
    dx = np.einsum("bohwij,ocij->bchw", windows, kernels[:, :, ::-1, ::-1], optimize=True)
    return dk, db, dx


# ------------------------------------------------------------------ pooling

def maxpool2(x):
    """2x2 max pooling, stride 2. Returns (out, argmax) where argmax holds the
    row-major position (0..3) of the first maximum in each block."""
    x = np.asarray(x, dtype=float)
    B, C, H, W = x.shape
    if H % 2 or W % 2:
        raise InvalidArgument(f"max pooling needs even spatial dims, got {(H, W)}")
    blocks = x.reshape(B, C, H // 2, 2, W // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(B, C, H // 2, W // 2, 4)
    arg = np.argmax(blocks, axis=-1)
    return np.take_along_axis(blocks, arg[..., None], -1)[..., 0], arg


def maxpool2_backward(arg, dy):
    B, C, h, w = dy.shape
    blocks = np.zeros((B, C, h, w, 4))
    np.put_along_axis(blocks, arg[..., None], dy[..., None], -1)
    return blocks.reshape(B, C, h, w, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, 2 * h, 2 * w)


# ------------------------------------------------------------------ dropout

@dataclass
class DropoutSpec:
    p: float = 0.4
    training: bool = True

    def __post_init__(self):
        if not 0.0 <= self.p < 1.0:
            raise InvalidArgument(f"dropout probability must be in [0, 1), got {self.p}")


def dropout(x, spec: DropoutSpec, rng: np.random.Generator):
    """Inverted dropout. Returns (output, mask); mask is None in eval mode."""
    if not spec.training or spec.p == 0.0:
        return x, None
    mask = (rng.random(np.shape(x)) >= spec.p) / (1.0 - spec.p)
    return x * mask, mask


def dropout_backward(mask, dy):
    return dy if mask is None else dy * mask


# ------------------------------------------------------------------ loss

def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean over samples of sum_j [-y log p - (1 - y) log(1 - p)] with p = softmax(logits).

    Returns (loss, dloss/dlogits). p is clamped to [1e-12, 1 - 1e-12]; the gradient
    is zero through clamped entries.
    """
    logits = np.asarray(logits, dtype=float)
    y = np.asarray(labels, dtype=float)
    if y.shape != logits.shape or not (
        np.all((y == 0) | (y == 1)) and np.all(y.sum(axis=1) == 1)
    ):
        raise InvalidArgument("labels must be one-hot rows matching the logits shape")
    m = logits.shape[0]
    prob = softmax(logits)
    p = np.clip(prob, PROB_CLAMP, 1 - PROB_CLAMP)
    loss = np.sum(-y * np.log(p) - (1 - y) * np.log1p(-p)) / m
    live = (prob > PROB_CLAMP) & (prob < 1 - PROB_CLAMP)
    dp = np.where(live, (-y / p + (1 - y) / (1 - p)) / m, 0.0)
    dz = prob * (dp - np.sum(dp * prob, axis=1, keepdims=True))
    return float(loss), dz


def one_hot(labels, k):
    labels = np.asarray(labels, dtype=int)
    out = np.zeros((labels.size, k))
    out[np.arange(labels.size), labels] = 1.0
    return out


# ------------------------------------------------------------------ init

@dataclass(frozen=True)
class UniformInit:
    bound: float

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        return rng.uniform(-self.bound, self.bound, size=shape)


def init_uniform_inverse_sqrt(fan_in: int) -> UniformInit:
    if fan_in < 1:
        raise InvalidArgument("fan_in must be >= 1")
    return UniformInit(1.0 / np.sqrt(fan_in))


def init_kaiming_uniform(fan_in: int) -> UniformInit:
    if fan_in < 1:
        raise InvalidArgument("fan_in must be >= 1")
    return UniformInit(np.sqrt(6.0 / fan_in))


# ------------------------------------------------------------------ optimiser

@dataclass
class SgdState:
    initial_lr: float = 0.01
    decay_factor: float = 0.1
    milestones: list = field(default_factory=list)
    lr: float | None = None
    applied: int = 0

    def __post_init__(self):
        if self.lr is None:
            self.lr = self.initial_lr
        if self.lr <= 0 or self.initial_lr <= 0:
            raise InvalidArgument("learning rate must be positive")
        if not 0 < self.decay_factor < 1:
            raise InvalidArgument("decay factor must lie in (0, 1)")
        self.milestones = sorted(int(m) for m in self.milestones)

    def lr_for_epoch(self, epoch: int) -> float:
        """Learning rate used during ``epoch`` (1-based): decayed once for every
        milestone the epoch has passed."""
        while self.applied < len(self.milestones) and epoch > self.milestones[self.applied]:
            self.lr *= self.decay_factor
            self.applied += 1
        return self.lr


def milestone_for(epochs: int, fraction: float = 0.58) -> int:
    return int(round(fraction * epochs))


def sgd_step(params, grads, state: SgdState, epoch: int):
    """In-place p <- p - lr * g for matching sequences of arrays."""
    if len(params) != len(grads):
        raise InvalidArgument("params and grads differ in length")
    lr = state.lr_for_epoch(epoch)
    for p, g in zip(params, grads):
        if np.shape(p) != np.shape(g):
            raise InvalidArgument(f"shape mismatch {np.shape(p)} vs {np.shape(g)}")
        p -= lr * g
    return params, state
