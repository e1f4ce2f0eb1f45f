"""Functional neural-network layers.

Layers read their weights from a name -> Tensor mapping using a dotted
prefix, e.g. ``linear(p, "enc.0.ff.fc1", x)`` reads ``enc.0.ff.fc1.w`` and
``enc.0.ff.fc1.b``. :class:`ParamBuilder` creates matching initial arrays.
"""

from __future__ import annotations

import math
from typing import Mapping

import numpy as np

from . import ops
from .tensor import Tensor


class ParamBuilder:
    """Collects freshly initialised parameter arrays under dotted names."""

    def __init__(self, rng: np.random.Generator, dtype=np.float32):
        self.rng = rng
        self.dtype = dtype
        self.arrays: dict[str, np.ndarray] = {}

    def _put(self, name: str, value: np.ndarray) -> None:
        if name in self.arrays:
            raise KeyError(f"duplicate parameter {name!r}")
        self.arrays[name] = value.astype(self.dtype)

    def linear(self, prefix: str, n_in: int, n_out: int) -> None:
        bound = 1.0 / math.sqrt(n_in)
        self._put(f"{prefix}.w", self.rng.uniform(-bound, bound, size=(n_in, n_out)))
        self._put(f"{prefix}.b", np.zeros(n_out))

    def layer_norm(self, prefix: str, dim: int) -> None:
        self._put(f"{prefix}.gamma", np.ones(dim))
        self._put(f"{prefix}.beta", np.zeros(dim))

    def attention(self, prefix: str, dim: int) -> None:
        for proj in ("q", "k", "v", "o"):
            self.linear(f"{prefix}.{proj}", dim, dim)

    def feed_forward(self, prefix: str, dim: int, hidden: int) -> None:
        self.linear(f"{prefix}.fc1", dim, hidden)
        self.linear(f"{prefix}.fc2", hidden, dim)


Params = Mapping[str, Tensor]


def linear(p: Params, prefix: str, x: Tensor) -> Tensor:
    return ops.linear(x, p[f"{prefix}.w"], p[f"{prefix}.b"])


def layer_norm(p: Params, prefix: str, x: Tensor) -> Tensor:
    return ops.layer_norm(x, p[f"{prefix}.gamma"], p[f"{prefix}.beta"])


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity when ``rng`` is None (eval mode) or rate is 0."""
    if rng is None or rate <= 0.0:
        return x
    keep = rng.random(x.shape) >= rate
    return ops.mul(x, (keep / (1.0 - rate)).astype(x.dtype))


def attention(q: Tensor, k: Tensor, v: Tensor, mask: np.ndarray | None = None,
              return_weights: bool = False):
    """Scaled dot-product attention over the last two axes.

    ``mask`` is boolean, broadcastable to (..., n, m), True where a query may
    attend. Every query row must keep at least one key.
    """
    if q.shape[-1] != k.shape[-1]:
        raise ValueError(f"query/key width mismatch: {q.shape[-1]} vs {k.shape[-1]}")
    if k.shape[-2] != v.shape[-2]:
        raise ValueError(f"key/value length mismatch: {k.shape[-2]} vs {v.shape[-2]}")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        empty = ~mask.any(axis=-1)
        if empty.any():
            row = tuple(int(i) for i in np.argwhere(empty)[0])
            raise ValueError(f"attention mask leaves query row {row} with no keys")
    scale = 1.0 / math.sqrt(q.shape[-1])
    scores = ops.matmul(q, ops.swapaxes(k, -1, -2)) * scale
    weights = ops.softmax(scores, mask)
    out = ops.matmul(weights, v)
    return (out, weights) if return_weights else out


def split_heads(x: Tensor, n_heads: int) -> Tensor:
    *lead, n, d = x.shape
    if d % n_heads:
        raise ValueError(f"width {d} not divisible by {n_heads} heads")
    x = ops.reshape(x, (*lead, n, n_heads, d // n_heads))
    return ops.swapaxes(x, -2, -3)


def merge_heads(x: Tensor) -> Tensor:
    *lead, h, n, dh = x.shape
    x = ops.swapaxes(x, -2, -3)
    return ops.reshape(x, (*lead, n, h * dh))


def project_kv(p: Params, prefix: str, x_kv: Tensor, n_heads: int) -> tuple[Tensor, Tensor]:
    k = split_heads(linear(p, f"{prefix}.k", x_kv), n_heads)
    v = split_heads(linear(p, f"{prefix}.v", x_kv), n_heads)
    return k, v


def attend(p: Params, prefix: str, x_q: Tensor, k: Tensor, v: Tensor, n_heads: int,
           mask: np.ndarray | None = None) -> Tensor:
    """Multi-head attention given already projected, head-split keys and values."""
    q = split_heads(linear(p, f"{prefix}.q", x_q), n_heads)
    heads = attention(q, k, v, mask)
    return linear(p, f"{prefix}.o", merge_heads(heads))


def multi_head_attention(p: Params, prefix: str, x_q: Tensor, x_kv: Tensor, n_heads: int,
                         mask: np.ndarray | None = None) -> Tensor:
    if x_q.shape[-1] != x_kv.shape[-1]:
        raise ValueError(f"query/key-value width mismatch: {x_q.shape[-1]} vs {x_kv.shape[-1]}")
    k, v = project_kv(p, prefix, x_kv, n_heads)
    return attend(p, prefix, x_q, k, v, n_heads, mask)


def feed_forward(p: Params, prefix: str, x: Tensor, rate: float = 0.0,
                 rng: np.random.Generator | None = None) -> Tensor:
    h = ops.gelu(linear(p, f"{prefix}.fc1", x))
    h = dropout(h, rate, rng)
    return linear(p, f"{prefix}.fc2", h)


def causal_mask(n: int) -> np.ndarray:
    return np.tril(np.ones((n, n), dtype=bool))


def sinusoidal_positions(n: int, dim: int, dtype=np.float32) -> np.ndarray:
    pos = np.arange(n)[:, None]
    i = np.arange(dim)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / dim)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle)).astype(dtype)
