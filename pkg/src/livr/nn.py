"""Minimal deterministic differentiable ops on dense (t, h, w, c) tensors.

Everything is plain numpy with hand-written backward passes. Forward, backward
and optimizer updates are bit-reproducible for fixed inputs; pooling ties are
broken by scan order. Tests run in float64, training typically in float32.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


@dataclass
class Tensor4:
    """Dense rank-4 array (frames, height, width, channels) with an optional gradient buffer."""

    values: np.ndarray
    grad: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values)
        if self.values.ndim != 4:
            raise ValueError("Tensor4 requires a rank-4 array (t, h, w, c)")
        if self.grad is not None and self.grad.shape != self.values.shape:
            raise ValueError("gradient buffer shape must match values")

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.values.shape  # type: ignore[return-value]


@dataclass
class ConvBlockParams:
    """3x3x3 convolution weights (kt, kh, kw, c_in, c_out) and per-channel bias."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self) -> None:
        if self.weights.ndim != 5 or self.weights.shape[:3] != (3, 3, 3):
            raise ValueError("conv weights must have shape (3, 3, 3, c_in, c_out)")
        if self.bias.shape != (self.weights.shape[4],):
            raise ValueError("bias length must equal c_out")


# transient zero-padded buffers, reused by shape; their contents never outlive
# one _im2col call, so only the border needs re-zeroing on reuse
_pad_pool: dict[tuple, np.ndarray] = {}


def _padded(x: np.ndarray) -> np.ndarray:
    *lead, t, h, w, ci = x.shape
    key = (*lead, t + 2, h + 2, w + 2, ci, np.dtype(x.dtype).str)
    xp = _pad_pool.get(key)
    if xp is None:
        xp = _pad_pool[key] = np.zeros(key[:-1], dtype=x.dtype)
    else:
        for axis in (-4, -3, -2):
            edge = [slice(None)] * xp.ndim
            edge[axis] = (0, -1)
            xp[tuple(edge)] = 0.0
    xp[..., 1:-1, 1:-1, 1:-1, :] = x
    return xp


def _im2col(x: np.ndarray) -> np.ndarray:
    """Unfold 3x3x3 neighborhoods (zero padded) into (t*h*w, 27*ci) columns.

    Leading axes pass through untouched, so a stream stack (s, t, h, w, ci)
    unfolds to (s, t*h*w, 27*ci) with a single padded copy.
    """
    *lead, t, h, w, ci = x.shape
    win = sliding_window_view(_padded(x), (3, 3, 3), axis=(-4, -3, -2))
    # window view is (..., t, h, w, ci, 3, 3, 3); reorder and flatten columns
    return np.moveaxis(win, -4, -1).reshape(*lead, t * h * w, 27 * ci)


def conv3d_unfolded(x: np.ndarray, weights: np.ndarray, bias: np.ndarray
                    ) -> tuple[np.ndarray, np.ndarray]:
    """conv3d that also returns the unfolded input for reuse in the backward pass."""
    t, h, w, ci = x.shape
    if weights.shape[:4] != (3, 3, 3, ci):
        raise ValueError(f"kernel {weights.shape} incompatible with input channels {ci}")
    co = weights.shape[4]
    cols = _im2col(x)
    y = cols @ weights.reshape(27 * ci, co)
    y += bias
    return y.reshape(t, h, w, co), cols


def conv3d(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Same-size 3-D cross-correlation, stride 1, zero padding 1 on t/h/w."""
    return conv3d_unfolded(x, weights, bias)[0]


def conv3d_backward(
    x: np.ndarray, weights: np.ndarray, grad_out: np.ndarray,
    cols: Optional[np.ndarray] = None, need_dx: bool = True,
) -> tuple[Optional[np.ndarray], np.ndarray, np.ndarray]:
    """Gradients of conv3d w.r.t. input, weights, and bias.

    ``cols`` may pass in the unfolded input from ``conv3d_unfolded`` to skip
    recomputing it; ``need_dx=False`` skips the input gradient (returned as
    None) when the input is a leaf.
    """
    t, h, w, ci = x.shape
    co = weights.shape[4]
    if grad_out.shape != (t, h, w, co):
        raise ValueError("grad_out shape mismatch")
    flat = grad_out.reshape(t * h * w, co)
    grad_b = flat.sum(axis=0)

    if cols is None:
        cols = _im2col(x)
    grad_w = (cols.T @ flat).reshape(3, 3, 3, ci, co)

    if not need_dx:
        return None, grad_w, grad_b
    # dx is the same-size correlation of grad_out with the spatially flipped,
    # channel-transposed kernel.
    wt = weights[::-1, ::-1, ::-1].transpose(0, 1, 2, 4, 3)
    grad_x = conv3d(grad_out, np.ascontiguousarray(wt), np.zeros(ci, dtype=x.dtype))
    return grad_x, grad_w, grad_b


def conv3d_stack(x: np.ndarray, weights: np.ndarray, bias: np.ndarray
                 ) -> tuple[np.ndarray, np.ndarray]:
    """conv3d over a stack of streams, each stream with its own kernel.

    ``x`` is (s, t, h, w, ci), ``weights`` (s, 3, 3, 3, ci, co), ``bias``
    (s, co). One unfold and one batched GEMM cover the whole stack, which
    keeps the many small per-place branches from drowning in call overhead.
    Returns (y, cols) like ``conv3d_unfolded``.
    """
    s, t, h, w, ci = x.shape
    if weights.shape[:5] != (s, 3, 3, 3, ci):
        raise ValueError(f"kernel stack {weights.shape} incompatible with input {x.shape}")
    co = weights.shape[5]
    cols = _im2col(x)
    y = cols @ weights.reshape(s, 27 * ci, co)
    y += bias[:, None, :]
    return y.reshape(s, t, h, w, co), cols


def conv3d_stack_backward(
    x: np.ndarray, weights: np.ndarray, grad_out: np.ndarray,
    cols: Optional[np.ndarray] = None, need_dx: bool = True,
) -> tuple[Optional[np.ndarray], np.ndarray, np.ndarray]:
    """Per-stream gradients of ``conv3d_stack``; mirrors ``conv3d_backward``."""
    s, t, h, w, ci = x.shape
    co = weights.shape[5]
    if grad_out.shape != (s, t, h, w, co):
        raise ValueError("grad_out shape mismatch")
    flat = grad_out.reshape(s, t * h * w, co)
    grad_b = flat.sum(axis=1)

    if cols is None:
        cols = _im2col(x)
    grad_w = (cols.transpose(0, 2, 1) @ flat).reshape(s, 3, 3, 3, ci, co)

    if not need_dx:
        return None, grad_w, grad_b
    wt = np.ascontiguousarray(weights[:, ::-1, ::-1, ::-1].transpose(0, 1, 2, 3, 5, 4))
    grad_x = conv3d_stack(grad_out, wt, np.zeros((s, ci), dtype=grad_out.dtype))[0]
    return grad_x, grad_w, grad_b


def _pool_candidates_spatial(x: np.ndarray) -> np.ndarray:
    h, w = x.shape[-3], x.shape[-2]
    oh, ow = -(-h // 2), -(-w // 2)
    cand = np.full((4, *x.shape[:-3], oh, ow, x.shape[-1]), -np.inf, dtype=x.dtype)
    for o, (dy, dx) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
        sub = x[..., dy::2, dx::2, :]
        cand[o, ..., : sub.shape[-3], : sub.shape[-2], :] = sub
    return cand


def maxpool_spatial(x: np.ndarray) -> np.ndarray:
    """1x2x2 max pooling, stride 1x2x2, ceil semantics on odd extents.

    Pools the (..., h, w, c) trailing layout, so single clips and stream
    stacks go through the same code.
    """
    return _pool_candidates_spatial(x).max(axis=0)


def maxpool_spatial_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    cand = _pool_candidates_spatial(x)
    winner = cand.argmax(axis=0)  # first occurrence == scan order
    grad_x = np.zeros_like(x)
    for o, (dy, dx) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
        sub = grad_x[..., dy::2, dx::2, :]
        routed = np.where(winner == o, grad_out, 0.0)[..., : sub.shape[-3], : sub.shape[-2], :]
        sub += routed
    return grad_x


def _pool_candidates_temporal(x: np.ndarray) -> np.ndarray:
    t = x.shape[-4]
    ot = -(-t // 2)
    cand = np.full((2, *x.shape[:-4], ot, *x.shape[-3:]), -np.inf, dtype=x.dtype)
    for o in (0, 1):
        sub = x[..., o::2, :, :, :]
        cand[o, ..., : sub.shape[-4], :, :, :] = sub
    return cand


def maxpool_temporal(x: np.ndarray) -> np.ndarray:
    """2x1x1 max pooling, stride 2x1x1, ceil semantics on odd frame counts.

    Pools the (..., t, h, w, c) trailing layout like its spatial sibling.
    """
    return _pool_candidates_temporal(x).max(axis=0)


def maxpool_temporal_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    cand = _pool_candidates_temporal(x)
    winner = cand.argmax(axis=0)
    grad_x = np.zeros_like(x)
    for o in (0, 1):
        sub = grad_x[..., o::2, :, :, :]
        sub += np.where(winner == o, grad_out, 0.0)[..., : sub.shape[-4], :, :, :]
    return grad_x


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return np.where(x > 0, grad_out, 0.0)


def decompose(x: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Mask a feature tensor by a spatial bitmap, broadcast over time and channels."""
    if mask.shape != x.shape[1:3]:
        raise ValueError(f"mask {mask.shape} does not match spatial dims {x.shape[1:3]}")
    return x * mask[None, :, :, None]


def decompose_backward(mask: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return grad_out * mask[None, :, :, None]


def sgmp(x: np.ndarray) -> np.ndarray:
    """Global max over all cells, per channel; applied once temporal pooling hits t=1."""
    c = x.shape[3]
    return x.reshape(-1, c).max(axis=0)


def sgmp_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    c = x.shape[3]
    flat = x.reshape(-1, c)
    idx = flat.argmax(axis=0)  # first occurrence in (t, h, w) scan order
    grad_flat = np.zeros_like(flat)
    grad_flat[idx, np.arange(c)] = grad_out
    return grad_flat.reshape(x.shape)


def sgmp_stack(x: np.ndarray) -> np.ndarray:
    """Per-stream global max pooling on a (s, t, h, w, c) stack; returns (s, c)."""
    s, c = x.shape[0], x.shape[4]
    return x.reshape(s, -1, c).max(axis=1)


def sgmp_stack_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    s, c = x.shape[0], x.shape[4]
    flat = x.reshape(s, -1, c)
    idx = flat.argmax(axis=1)  # first occurrence per stream, same scan order
    grad_flat = np.zeros_like(flat)
    grad_flat[np.arange(s)[:, None], idx, np.arange(c)[None, :]] = grad_out
    return grad_flat.reshape(x.shape)


def linear(f: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    return weights @ f + bias


def linear_backward(
    f: np.ndarray, weights: np.ndarray, grad_y: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return weights.T @ grad_y, np.outer(grad_y, f), grad_y.copy()


@dataclass
class GatedFCParams:
    """Affine layer whose weight matrix is hard-gated by a fixed boolean mask.

    Masked weight entries are zeroed at construction and stay exactly zero
    through any optimizer trajectory (see ``adam_step``'s masks argument).
    The bias is never masked.
    """

    weights: np.ndarray
    bias: np.ndarray
    mask: np.ndarray

    def __post_init__(self) -> None:
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.weights.shape != self.mask.shape:
            raise ValueError("weight and mask shapes differ")
        if self.bias.shape != (self.weights.shape[0],):
            raise ValueError("bias length must equal the output count")
        self.weights = np.where(self.mask, self.weights, 0.0)


def gated_fc(f: np.ndarray, params: GatedFCParams) -> np.ndarray:
    """y = (W masked) f + b."""
    if f.shape != (params.weights.shape[1],):
        raise ValueError(f"feature length {f.shape} does not match gate width {params.weights.shape[1]}")
    return np.where(params.mask, params.weights, 0.0) @ f + params.bias


def gated_fc_backward(
    f: np.ndarray, params: GatedFCParams, grad_y: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (df, dW, db); dW is exactly zero at masked positions."""
    grad_f = np.where(params.mask, params.weights, 0.0).T @ grad_y
    grad_w = np.where(params.mask, np.outer(grad_y, f), 0.0)
    return grad_f, grad_w, grad_y.copy()


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_bce(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy over sigmoid outputs, log-sum-exp stabilized."""
    y = np.asarray(logits, dtype=np.float64)
    l = np.asarray(labels, dtype=np.float64)
    per = np.maximum(y, 0.0) - y * l + np.log1p(np.exp(-np.abs(y)))
    return float(per.mean())


def sigmoid_bce_backward(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    y = np.asarray(logits, dtype=np.float64)
    return (sigmoid(y) - np.asarray(labels, dtype=np.float64)) / y.size


@dataclass
class AdamState:
    """Adam moment buffers and hyperparameters for a named parameter set."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_init(params: dict[str, np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    for name in sorted(params):
        state.m[name] = np.zeros_like(params[name])
        state.v[name] = np.zeros_like(params[name])
    return state


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    masks: Optional[dict[str, np.ndarray]] = None,
) -> None:
    """In-place Adam update; parameters listed in ``masks`` are re-zeroed where gated off."""
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for name in sorted(params):
        p, g = params[name], grads[name]
        if p.shape != g.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        if masks is not None and name in masks:
            p[~masks[name]] = 0.0


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Rescale gradients in place so their global L2 norm is at most max_norm.

    Returns the norm measured before any rescaling.
    """
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    total = math.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


def gradcheck(fun: Callable[[np.ndarray], tuple[float, np.ndarray]], x: np.ndarray,
              eps: float = 1e-4) -> float:
    """Max relative error between central differences and the analytic gradient.

    ``fun`` maps an array to (scalar objective, gradient w.r.t. that array);
    relative error uses denominator max(|analytic|, |numeric|, 1e-8).
    """
    _, analytic = fun(x)
    worst = 0.0
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xp[idx] += eps
        fp, _ = fun(xp)
        xm = x.copy()
        xm[idx] -= eps
        fm, _ = fun(xm)
        numeric = (fp - fm) / (2.0 * eps)
        denom = max(abs(analytic[idx]), abs(numeric), 1e-8)
        worst = max(worst, abs(analytic[idx] - numeric) / denom)
    return worst


def he_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, dtype=np.float64) -> np.ndarray:
    return (rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)).astype(dtype)
