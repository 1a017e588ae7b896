"""
Differentiable primitives

Each op computes its forward value with numpy and registers a closure that
maps the output gradient to one gradient per input. Broadcasting follows
numpy rules; gradients are summed back to the input shape.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from src.errors import DimensionError, NumericError
from src.tensor.node import DTYPE, Node, as_node, make_node

ArrayLike = Union[Node, np.ndarray, float, int]

_GELU_C = math.sqrt(2.0 / math.pi)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, dim in enumerate(shape) if dim == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a: ArrayLike, b: ArrayLike) -> Node:
    a, b = as_node(a), as_node(b)
    return make_node(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a: ArrayLike, b: ArrayLike) -> Node:
    a, b = as_node(a), as_node(b)
    return make_node(
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a: ArrayLike, b: ArrayLike) -> Node:
    a, b = as_node(a), as_node(b)
    return make_node(
        a.value * b.value,
        (a, b),
        lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)),
        "mul",
    )


def div(a: ArrayLike, b: ArrayLike) -> Node:
    a, b = as_node(a), as_node(b)
    out = a.value / b.value
    return make_node(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / b.value, a.shape), _unbroadcast(-g * out / b.value, b.shape)),
        "div",
    )


def neg(a: ArrayLike) -> Node:
    a = as_node(a)
    return make_node(-a.value, (a,), lambda g: (-g,), "neg")


def matmul(a: ArrayLike, b: ArrayLike) -> Node:
    """
    Matrix product over the last two axes, broadcasting leading (batch) axes.

    Raises:
        DimensionError: if either input has fewer than 2 axes or inner dims disagree
    """
    a, b = as_node(a), as_node(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs inputs with >= 2 axes, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")

    def backward_fn(g):
        grad_a = np.matmul(g, np.swapaxes(b.value, -1, -2))
        grad_b = np.matmul(np.swapaxes(a.value, -1, -2), g)
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)

    return make_node(np.matmul(a.value, b.value), (a, b), backward_fn, "matmul")


def transpose(a: ArrayLike, axes: Optional[Sequence[int]] = None) -> Node:
    """Permute axes; default swaps the last two."""
    a = as_node(a)
    if axes is None:
        axes = list(range(a.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return make_node(np.transpose(a.value, axes), (a,), lambda g: (np.transpose(g, inverse),), "transpose")


def reshape(a: ArrayLike, shape: Sequence[int]) -> Node:
    a = as_node(a)
    return make_node(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def sum(a: ArrayLike, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> Node:
    a = as_node(a)

    def backward_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make_node(np.sum(a.value, axis=axis, keepdims=keepdims), (a,), backward_fn, "sum")


def mean(a: ArrayLike, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> Node:
    a = as_node(a)
    count = a.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return div(sum(a, axis=axis, keepdims=keepdims), float(count))


def sqrt(a: ArrayLike) -> Node:
    a = as_node(a)
    out = np.sqrt(a.value)
    return make_node(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def exp(a: ArrayLike) -> Node:
    a = as_node(a)
    out = np.exp(a.value)
    return make_node(out, (a,), lambda g: (g * out,), "exp")


def log(a: ArrayLike) -> Node:
    a = as_node(a)
    return make_node(np.log(a.value), (a,), lambda g: (g / a.value,), "log")


def gelu(a: ArrayLike) -> Node:
    """GELU, tanh approximation."""
    a = as_node(a)
    x = a.value
    t = np.tanh(_GELU_C * (x + 0.044715 * x ** 3))
    out = 0.5 * x * (1.0 + t)

    def backward_fn(g):
        local = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t ** 2) * _GELU_C * (1.0 + 3 * 0.044715 * x ** 2)
        return (g * local,)

    return make_node(out, (a,), backward_fn, "gelu")


def softmax(x: ArrayLike, axis: int = -1) -> Node:
    """Softmax stabilized by max-subtraction."""
    x = as_node(x)
    if not -x.ndim <= axis < max(x.ndim, 1):
        raise DimensionError(f"softmax axis {axis} is invalid for shape {x.shape}")
    shifted = x.value - np.max(x.value, axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / np.sum(e, axis=axis, keepdims=True)

    def backward_fn(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return make_node(y, (x,), backward_fn, "softmax")


def layernorm(x: ArrayLike, gain: ArrayLike, bias: ArrayLike, eps: float = 1e-5) -> Node:
    """
    Per-position normalization over the last axis, then affine gain/bias.

    Uses the population variance.
    """
    x, gain, bias = as_node(x), as_node(gain), as_node(bias)
    if x.ndim == 0 or x.shape[-1] < 2:
        raise DimensionError(f"layernorm needs a last axis of length >= 2, got shape {x.shape}")
    mu = x.value.mean(axis=-1, keepdims=True)
    centered = x.value - mu
    inv_std = 1.0 / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + eps)
    x_hat = centered * inv_std
    out = x_hat * gain.value + bias.value

    def backward_fn(g):
        g_hat = g * gain.value
        grad_x = inv_std * (
            g_hat
            - g_hat.mean(axis=-1, keepdims=True)
            - x_hat * (g_hat * x_hat).mean(axis=-1, keepdims=True)
        )
        return grad_x, _unbroadcast(g * x_hat, gain.shape), _unbroadcast(g, bias.shape)

    return make_node(out, (x, gain, bias), backward_fn, "layernorm")


def embedding(table: ArrayLike, ids: np.ndarray) -> Node:
    """Row lookup table[ids]; ids is an integer array of any shape."""
    table = as_node(table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise DimensionError(f"embedding ids must lie in [0, {table.shape[0]}), got range [{ids.min()}, {ids.max()}]")

    def backward_fn(g):
        grad = np.zeros_like(table.value)
        np.add.at(grad, ids, g)
        return (grad,)

    return make_node(table.value[ids], (table,), backward_fn, "embedding")


def _is_basic_index(key) -> bool:
    keys = key if isinstance(key, tuple) else (key,)
    return all(isinstance(k, (int, slice, type(None), type(Ellipsis))) for k in keys)


def take(a: ArrayLike, key) -> Node:
    """Differentiable indexing a[key] (slices, ints or integer arrays)."""
    a = as_node(a)
    basic = _is_basic_index(key)

    def backward_fn(g):
        grad = np.zeros_like(a.value)
        if basic:
            grad[key] = g
        else:
            np.add.at(grad, key, g)
        return (grad,)

    return make_node(a.value[key], (a,), backward_fn, "take")


def concat(nodes: Sequence[ArrayLike], axis: int = 0) -> Node:
    nodes = [as_node(n) for n in nodes]
    sizes = [n.shape[axis] for n in nodes]
    splits = np.cumsum(sizes)[:-1]

    def backward_fn(g):
        return tuple(np.split(g, splits, axis=axis))

    return make_node(np.concatenate([n.value for n in nodes], axis=axis), nodes, backward_fn, "concat")


def cross_entropy(logits: ArrayLike, targets: np.ndarray, mask: np.ndarray) -> Node:
    """
    Mean negative log-likelihood over the masked positions.

    Args:
        logits: (..., V) unnormalized scores
        targets: (...) integer class ids
        mask: (...) boolean, True where the position is supervised

    Raises:
        NumericError: if the mask selects no position
        DimensionError: if shapes disagree or a supervised target is >= V
    """
    logits = as_node(logits)
    targets = np.asarray(targets, dtype=np.int64)
    mask = np.asarray(mask, dtype=bool)
    vocab = logits.shape[-1]
    if logits.shape[:-1] != targets.shape or targets.shape != mask.shape:
        raise DimensionError(
            f"cross_entropy shapes disagree: logits {logits.shape}, targets {targets.shape}, mask {mask.shape}"
        )
    count = int(mask.sum())
    if count == 0:
        raise NumericError("cross_entropy needs at least one supervised position; the mask is empty")
    supervised = targets[mask]
    if supervised.min() < 0 or supervised.max() >= vocab:
        raise DimensionError(f"target ids must lie in [0, {vocab}), got range [{supervised.min()}, {supervised.max()}]")

    safe_targets = np.where(mask, targets, 0)
    shifted = logits.value - np.max(logits.value, axis=-1, keepdims=True)
    log_z = np.log(np.sum(np.exp(shifted), axis=-1))
    picked = np.take_along_axis(shifted, safe_targets[..., None], axis=-1)[..., 0]
    nll = log_z - picked
    weights = mask.astype(DTYPE) / count
    loss = np.sum(nll * weights)

    def backward_fn(g):
        probs = np.exp(shifted - log_z[..., None])
        np.put_along_axis(probs, safe_targets[..., None], np.take_along_axis(probs, safe_targets[..., None], axis=-1) - 1.0, axis=-1)
        return (probs * weights[..., None] * g,)

    return make_node(np.asarray(loss), (logits,), backward_fn, "cross_entropy")
