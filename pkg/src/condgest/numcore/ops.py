"""Registered primitives.

Each primitive computes its forward value with numpy and returns a closure
giving the vector-Jacobian product. Broadcasting is limited to what the models
use: elementwise ops broadcast trailing/leading axes, matmul broadcasts batch
axes.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, primitive

_GELU_C = np.sqrt(2.0 / np.pi)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _shape(x) -> tuple[int, ...]:
    return np.shape(x)


# ---------------------------------------------------------------- elementwise


@primitive("add")
def add(a, b):
    sa, sb = _shape(a), _shape(b)
    return a + b, lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb))


@primitive("sub")
def sub(a, b):
    sa, sb = _shape(a), _shape(b)
    return a - b, lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb))


@primitive("mul")
def mul(a, b):
    sa, sb = _shape(a), _shape(b)
    return a * b, lambda g: (_unbroadcast(g * b, sa), _unbroadcast(g * a, sb))


@primitive("reciprocal")
def reciprocal(a):
    out = 1.0 / a
    return out, lambda g: (-g * out * out,)


@primitive("exp")
def exp(a):
    out = np.exp(a)
    return out, lambda g: (g * out,)


@primitive("log")
def log(a):
    return np.log(a), lambda g: (g / a,)


@primitive("abs")
def abs_(a):
    return np.abs(a), lambda g: (g * np.sign(a),)


@primitive("relu")
def relu(a):
    mask = a > 0
    return np.where(mask, a, 0).astype(a.dtype), lambda g: (g * mask,)


@primitive("gelu")
def gelu(a):
    """Tanh-approximated GELU."""
    inner = _GELU_C * (a + 0.044715 * a**3)
    t = np.tanh(inner)
    out = 0.5 * a * (1.0 + t)

    def vjp(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * a**2)
        return (g * (0.5 * (1.0 + t) + 0.5 * a * (1.0 - t * t) * dinner),)

    return out.astype(a.dtype, copy=False), vjp


# ---------------------------------------------------------------- reductions


@primitive("sum")
def sum_(a, axis=None, keepdims=False):
    shape = a.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return np.sum(a, axis=axis, keepdims=keepdims), vjp


@primitive("mean")
def mean(a, axis=None, keepdims=False):
    shape = a.shape
    n = a.size if axis is None else int(np.prod([shape[i] for i in np.atleast_1d(axis)]))

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, shape).astype(a.dtype),)

    return np.mean(a, axis=axis, keepdims=keepdims), vjp


# ---------------------------------------------------------------- linear algebra


@primitive("matmul")
def matmul(a, b):
    sa, sb = a.shape, b.shape

    def vjp(g):
        ga = g @ np.swapaxes(b, -1, -2)
        gb = np.swapaxes(a, -1, -2) @ g
        return _unbroadcast(ga, sa), _unbroadcast(gb, sb)

    return a @ b, vjp


@primitive("linear")
def linear(x, w, b):
    """``x @ w + b`` with ``w`` of shape (in, out) shared over leading axes of ``x``."""
    sx = x.shape

    def vjp(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = (g2 @ w.T).reshape(sx)
        gw = x.reshape(-1, sx[-1]).T @ g2
        return gx, gw, g2.sum(axis=0)

    return x @ w + b, vjp


# ---------------------------------------------------------------- shape


@primitive("reshape")
def reshape(a, shape):
    src = a.shape
    return a.reshape(shape), lambda g: (g.reshape(src),)


@primitive("swapaxes")
def swapaxes(a, ax1, ax2):
    return np.swapaxes(a, ax1, ax2), lambda g: (np.swapaxes(g, ax1, ax2),)


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in items)


@primitive("take")
def take(a, index):
    """``a[index]`` for basic or integer-array indices."""
    basic = _is_basic_index(index)

    def vjp(g):
        z = np.zeros_like(a)
        if basic:
            z[index] = g
        else:
            np.add.at(z, index, g)
        return (z,)

    return a[index], vjp


@primitive("concat")
def concat(*arrays, axis=-1):
    sizes = [x.shape[axis] for x in arrays]
    cuts = np.cumsum(sizes)[:-1]
    return np.concatenate(arrays, axis=axis), lambda g: tuple(np.split(g, cuts, axis=axis))


# ---------------------------------------------------------------- normalisers


@primitive("softmax")
def softmax(x, mask=None):
    """Softmax over the last axis; ``mask`` (broadcastable boolean) marks kept entries."""
    if mask is not None:
        x = np.where(mask, x, -np.inf)
    m = np.max(x, axis=-1, keepdims=True)
    e = np.exp(x - m)
    y = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return (y * (g - np.sum(g * y, axis=-1, keepdims=True)),)

    return y, vjp


@primitive("log_softmax")
def log_softmax(x, axis=-1):
    m = np.max(x, axis=axis, keepdims=True)
    shifted = x - m
    lse = np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
    out = shifted - lse

    def vjp(g):
        return (g - np.exp(out) * np.sum(g, axis=axis, keepdims=True),)

    return out, vjp


@primitive("layer_norm")
def layer_norm(x, gamma, beta, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    n = x.shape[-1]

    def vjp(g):
        dxhat = g * gamma
        gx = inv / n * (
            n * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        )
        g2 = g.reshape(-1, n)
        return gx, (g2 * xhat.reshape(-1, n)).sum(axis=0), g2.sum(axis=0)

    return xhat * gamma + beta, vjp


class ZeroNormError(ValueError):
    pass


@primitive("l2_normalize")
def l2_normalize(x, eps=1e-12):
    norm = np.sqrt(np.sum(x * x, axis=-1, keepdims=True))
    if np.any(norm <= eps):
        bad = np.argwhere(norm[..., 0] <= eps)
        raise ZeroNormError(f"cannot normalize zero-norm vector at index {bad[0].tolist()}")
    y = x / norm

    def vjp(g):
        return ((g - y * np.sum(g * y, axis=-1, keepdims=True)) / norm,)

    return y, vjp


@primitive("stop_gradient")
def stop_gradient(x):
    return x, lambda g: (None,)


# ---------------------------------------------------------------- non-differentiable


@primitive("argmax", differentiable=False)
def argmax(x, axis=-1):
    return np.argmax(x, axis=axis)


@primitive("sign", differentiable=False)
def sign(x):
    return np.sign(x)


@primitive("round", differentiable=False)
def round_(x):
    return np.round(x)


# ---------------------------------------------------------------- checked entry points


def check_finite(x: np.ndarray, what: str = "input") -> None:
    bad = ~np.isfinite(x)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValueError(f"{what} has non-finite value {x[idx]!r} at index {idx}")


def softmax_rows(x) -> Tensor:
    """Row-wise softmax with max subtraction; rejects NaN/Inf entries."""
    t = x if isinstance(x, Tensor) else Tensor(np.asarray(x))
    check_finite(t.data, "softmax input")
    return softmax(t)


# public names that shadow builtins; bound last so the module body keeps the builtins
sum = sum_  # noqa: A001
abs = abs_  # noqa: A001
round = round_  # noqa: A001
