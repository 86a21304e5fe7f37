"""
Differentiable primitives.

Each primitive computes its result with numpy and, when a tape is active
and an input requires a gradient, records a closed-form backward rule.
Broadcasting is limited to adding a bias over the last axis and to
multiplying a batch of matrices by one shared weight matrix.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np

from lift.errors import ConfigError, DimensionError
from lift.tensor import Tensor, as_tensor, record

LAYER_NORM_EPS = 1e-5
_GELU_K = math.sqrt(2.0 / math.pi)
_GELU_C = 0.044715


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        reason = f"shapes {a.shape} and {b.shape} differ"
        raise DimensionError(
            reason, operation=op, expected=a.shape, actual=b.shape, reason=reason
        )


def _sum_to_last(g: np.ndarray, n: int) -> np.ndarray:
    return g.reshape(-1, n).sum(axis=0)


# ---------------------------------------------------------------------------
# Elementwise arithmetic
# ---------------------------------------------------------------------------


def add(a: Any, b: Any) -> Tensor:
    """
    Elementwise sum.

    ``b`` may also be a vector matching the last axis of ``a`` (bias add).
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.shape == b.shape:
        return record("add", a.data + b.data, (a, b), lambda g: (g, g))
    if b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0]:
        n = b.shape[0]
        return record("add_bias", a.data + b.data, (a, b), lambda g: (g, _sum_to_last(g, n)))
    reason = f"cannot add {b.shape} to {a.shape}: only equal shapes or a last-axis bias"
    raise DimensionError(reason, operation="add", expected=a.shape, actual=b.shape, reason=reason)


def sub(a: Any, b: Any) -> Tensor:
    """Elementwise difference of equally shaped tensors."""
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("sub", a, b)
    return record("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Any, b: Any) -> Tensor:
    """Elementwise product of equally shaped tensors."""
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("mul", a, b)
    av, bv = a.data, b.data
    return record("mul", av * bv, (a, b), lambda g: (g * bv, g * av))


def scale(a: Any, c: float) -> Tensor:
    """Multiply every element by the constant ``c``."""
    a = as_tensor(a)
    return record("scale", a.data * c, (a,), lambda g: (g * c,))


def sum(a: Any) -> Tensor:  # noqa: A001
    """Sum of all elements as a scalar tensor."""
    a = as_tensor(a)
    shape = a.shape
    return record("sum", np.asarray(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, shape),))


def mean(a: Any) -> Tensor:
    """Mean of all elements as a scalar tensor."""
    a = as_tensor(a)
    return scale(sum(a), 1.0 / a.size)


def sum_last(a: Any) -> Tensor:
    """Sum over the last axis."""
    a = as_tensor(a)
    shape = a.shape
    return record(
        "sum_last", a.data.sum(axis=-1), (a,), lambda g: (np.broadcast_to(g[..., None], shape),)
    )


# ---------------------------------------------------------------------------
# Linear algebra and layout
# ---------------------------------------------------------------------------


def matmul(a: Any, b: Any) -> Tensor:
    """
    Matrix product over the last two axes.

    Both operands may carry identical leading batch axes, or ``b`` may be a
    single matrix shared by every leading index of ``a``.

    Raises:
        DimensionError: If the inner extents disagree or the batch axes differ.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        reason = f"matmul needs at least 2-D operands, got {a.shape} and {b.shape}"
        raise DimensionError(reason, operation="matmul", reason=reason)
    if a.shape[-1] != b.shape[-2]:
        reason = (
            f"inner dimensions differ: a{a.shape} has {a.shape[-1]} columns, "
            f"b{b.shape} has {b.shape[-2]} rows"
        )
        raise DimensionError(
            reason, operation="matmul", expected=a.shape[-1], actual=b.shape[-2], reason=reason
        )
    av, bv = a.data, b.data
    out = np.matmul(av, bv)

    if b.ndim == 2:
        k, n = bv.shape

        def backward_shared(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            ga = np.matmul(g, bv.T)
            gb = av.reshape(-1, k).T @ g.reshape(-1, n)
            return ga, gb

        return record("matmul", out, (a, b), backward_shared)

    if a.shape[:-2] != b.shape[:-2]:
        reason = f"batch axes differ: {a.shape[:-2]} vs {b.shape[:-2]}"
        raise DimensionError(
            reason, operation="matmul", expected=a.shape, actual=b.shape, reason=reason
        )

    def backward_batched(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return np.matmul(g, np.swapaxes(bv, -1, -2)), np.matmul(np.swapaxes(av, -1, -2), g)

    return record("matmul", out, (a, b), backward_batched)


def transpose(a: Any, axes: Sequence[int]) -> Tensor:
    """Permute axes."""
    a = as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return record(
        "transpose", np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),)
    )


def reshape(a: Any, shape: Sequence[int]) -> Tensor:
    """Reshape without changing the row-major element order."""
    a = as_tensor(a)
    original = a.shape
    return record("reshape", a.data.reshape(tuple(shape)), (a,), lambda g: (g.reshape(original),))


def concat(parts: Sequence[Any], axis: int = -1) -> Tensor:
    """Concatenate along ``axis``."""
    tensors = tuple(as_tensor(p) for p in parts)
    if not tensors:
        raise DimensionError("concat needs at least one tensor", operation="concat")
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g: np.ndarray) -> list[np.ndarray]:
        return list(np.split(g, bounds, axis=axis))

    return record("concat", np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def take(a: Any, indices: Sequence[int], axis: int = 0) -> Tensor:
    """Select positions along ``axis``; repeated indices accumulate gradient."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.int64)
    shape = a.shape
    axis = axis % a.ndim

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        out = np.zeros(shape, dtype=g.dtype)
        moved = np.moveaxis(out, axis, 0)
        np.add.at(moved, idx, np.moveaxis(g, axis, 0))
        return (out,)

    return record("take", np.take(a.data, idx, axis=axis), (a,), backward)


# ---------------------------------------------------------------------------
# Nonlinearities and normalization
# ---------------------------------------------------------------------------


def gelu(x: Any) -> Tensor:
    """GeLU with the tanh approximation: 0.5·x·(1 + tanh(k·(x + 0.044715·x³)))."""
    x = as_tensor(x)
    v = x.data
    inner = _GELU_K * (v + _GELU_C * v**3)
    th = np.tanh(inner)
    out = 0.5 * v * (1.0 + th)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        d_inner = _GELU_K * (1.0 + 3.0 * _GELU_C * v**2)
        return (g * (0.5 * (1.0 + th) + 0.5 * v * (1.0 - th**2) * d_inner),)

    return record("gelu", out, (x,), backward)


def relu(x: Any) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return record("relu", np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def tanh(x: Any) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)
    return record("tanh", out, (x,), lambda g: (g * (1.0 - out**2),))


def softmax(x: Any) -> Tensor:
    """Softmax over the last axis; rows sum to 1."""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return record("softmax", y, (x,), backward)


def layer_norm(x: Any, gain: Any, bias: Any, eps: float = LAYER_NORM_EPS) -> Tensor:
    """
    Per-row normalization over the last axis followed by an affine map.

    The variance uses 1/d and ``eps`` is added inside the square root.

    Raises:
        DimensionError: If the last axis is empty or does not match gain/bias.
    """
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1] if x.ndim else 0
    if d == 0:
        raise DimensionError("layer_norm over an empty last axis", operation="layer_norm")
    if gain.shape != (d,) or bias.shape != (d,):
        reason = f"gain {gain.shape} / bias {bias.shape} must both be ({d},)"
        raise DimensionError(
            reason, operation="layer_norm", expected=(d,), actual=gain.shape, reason=reason
        )
    v = x.data
    mu = v.mean(axis=-1, keepdims=True)
    centered = v - mu
    var = (centered**2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    gv = gain.data
    out = xhat * gv + bias.data

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        dxhat = g * gv
        dx = (inv / d) * (
            d * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        )
        return dx, _sum_to_last(g * xhat, d), _sum_to_last(g, d)

    return record("layer_norm", out, (x, gain, bias), backward)


# ---------------------------------------------------------------------------
# Composite layers
# ---------------------------------------------------------------------------


def linear(x: Any, weight: Any, bias: Any | None = None) -> Tensor:
    """``x @ weight + bias`` with weight stored as (in, out)."""
    out = matmul(x, weight)
    return add(out, bias) if bias is not None else out


@dataclass(frozen=True)
class AttentionWeights:
    """Projection weights of one multi-head attention layer, stored (in, out)."""

    wq: Any
    bq: Any
    wk: Any
    bk: Any
    wv: Any
    bv: Any
    wo: Any
    bo: Any


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, s, d = x.shape
    x = reshape(x, (*lead, s, heads, d // heads))
    n = x.ndim
    axes = list(range(n - 3)) + [n - 2, n - 3, n - 1]
    return transpose(x, axes)


def _merge_heads(x: Tensor) -> Tensor:
    n = x.ndim
    axes = list(range(n - 3)) + [n - 2, n - 3, n - 1]
    x = transpose(x, axes)
    *lead, s, h, dh = x.shape
    return reshape(x, (*lead, s, h * dh))


def multi_head_attention(
    q: Any,
    k: Any,
    v: Any,
    heads: int,
    weights: AttentionWeights,
    mask: np.ndarray | None = None,
) -> Tensor:
    """
    Scaled dot-product attention with ``heads`` heads.

    Inputs are (..., S, d). Each head attends with scale 1/sqrt(d/heads);
    heads are concatenated and passed through the output projection.
    ``mask`` (..., S_q, S_k) of booleans hides keys where False.

    Raises:
        ConfigError: If d is not divisible by heads.
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    d = q.shape[-1]
    if heads < 1 or d % heads != 0:
        raise ConfigError(
            f"model width {d} is not divisible by {heads} heads",
            operation="multi_head_attention",
            reason=f"d % heads = {d % heads if heads else 'undefined'}",
        )
    qh = _split_heads(linear(q, weights.wq, weights.bq), heads)
    kh = _split_heads(linear(k, weights.wk, weights.bk), heads)
    vh = _split_heads(linear(v, weights.wv, weights.bv), heads)
    n = kh.ndim
    axes = list(range(n - 2)) + [n - 1, n - 2]
    logits = scale(matmul(qh, transpose(kh, axes)), 1.0 / math.sqrt(d // heads))
    if mask is not None:
        penalty = np.where(np.asarray(mask, dtype=bool), 0.0, -1e9)
        penalty = np.broadcast_to(penalty[..., None, :, :], logits.shape)
        logits = add(logits, Tensor(penalty))
    attended = matmul(softmax(logits), vh)
    return linear(_merge_heads(attended), weights.wo, weights.bo)


# ---------------------------------------------------------------------------
# Losses and latent-space helpers
# ---------------------------------------------------------------------------


def latent_line(z_s: Any, z_d: Any, coeffs: Sequence[float] | np.ndarray) -> Tensor:
    """
    Points z_s + c·z_d for every coefficient c.

    ``z_s`` and ``z_d`` are (..., d); the result is (..., len(coeffs), d).
    """
    z_s, z_d = as_tensor(z_s), as_tensor(z_d)
    _same_shape("latent_line", z_s, z_d)
    c = np.asarray(coeffs, dtype=z_s.dtype)
    c_b = c[:, None]
    out = z_s.data[..., None, :] + c_b * z_d.data[..., None, :]

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return g.sum(axis=-2), (g * c_b).sum(axis=-2)

    return record("latent_line", out, (z_s, z_d), backward)


def cosine_similarity(a: Any, b: Any) -> Tensor:
    """
    Row-wise cosine similarity of (..., d) tensors.

    Rows where either vector has zero norm score 0 with zero gradient.
    """
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("cosine_similarity", a, b)
    av, bv = a.data, b.data
    na = np.sqrt((av * av).sum(axis=-1))
    nb = np.sqrt((bv * bv).sum(axis=-1))
    valid = (na > 0) & (nb > 0)
    denom = np.where(valid, na * nb, 1.0)
    cos = np.where(valid, (av * bv).sum(axis=-1) / denom, 0.0)

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        safe_na = np.where(valid, na, 1.0)[..., None]
        safe_nb = np.where(valid, nb, 1.0)[..., None]
        c = cos[..., None]
        gg = np.where(valid, g, 0.0)[..., None]
        ga = gg * (bv / (safe_na * safe_nb) - c * av / safe_na**2)
        gb = gg * (av / (safe_na * safe_nb) - c * bv / safe_nb**2)
        return ga, gb

    return record("cosine_similarity", cos, (a, b), backward)


def sigmoid_cross_entropy(logits: Any, labels: np.ndarray) -> Tensor:
    """Mean binary log-loss of (N,) logits against 0/1 labels."""
    logits = as_tensor(logits)
    z = logits.data
    y = np.asarray(labels, dtype=z.dtype).reshape(z.shape)
    n = z.size
    loss = (np.logaddexp(0.0, z) - y * z).mean()
    prob = 0.5 * (1.0 + np.tanh(0.5 * z))

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * (prob - y) / n,)

    return record("sigmoid_cross_entropy", np.asarray(loss), (logits,), backward)


def softmax_cross_entropy(logits: Any, labels: np.ndarray) -> Tensor:
    """Mean multi-class log-loss of (N, K) logits against integer labels."""
    logits = as_tensor(logits)
    z = logits.data
    y = np.asarray(labels, dtype=np.int64)
    n = z.shape[0]
    shifted = z - z.max(axis=-1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    log_prob = shifted - log_norm
    loss = -log_prob[np.arange(n), y].mean()
    prob = np.exp(log_prob)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad = prob.copy()
        grad[np.arange(n), y] -= 1.0
        return (g * grad / n,)

    return record("softmax_cross_entropy", np.asarray(loss), (logits,), backward)
