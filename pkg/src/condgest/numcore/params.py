"""Named parameter collections and gradient evaluation."""

from __future__ import annotations

from typing import Callable, Iterator, Mapping

import numpy as np

from .tensor import Tape, Tensor


class ModelParams(Mapping[str, np.ndarray]):
    """Immutable-order mapping of parameter name to array.

    Iteration, :meth:`flatten` and :meth:`unflatten` all use lexicographic
    name order, which is also the checkpoint order.
    """

    def __init__(self, arrays: Mapping[str, np.ndarray]):
        self._arrays = {k: np.asarray(arrays[k]) for k in sorted(arrays)}

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._arrays)

    def __len__(self) -> int:
        return len(self._arrays)

    def __repr__(self) -> str:
        return f"ModelParams({len(self)} tensors, {self.size} values)"

    @property
    def size(self) -> int:
        return sum(a.size for a in self._arrays.values())

    @property
    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: a.shape for k, a in self._arrays.items()}

    def flatten(self) -> np.ndarray:
        if not self._arrays:
            return np.zeros(0)
        return np.concatenate([a.ravel() for a in self._arrays.values()])

    def unflatten(self, vector: np.ndarray) -> "ModelParams":
        vector = np.asarray(vector)
        if vector.shape != (self.size,):
            raise ValueError(f"expected a flat vector of length {self.size}, got shape {vector.shape}")
        out, pos = {}, 0
        for k, a in self._arrays.items():
            out[k] = vector[pos : pos + a.size].reshape(a.shape).astype(a.dtype, copy=True)
            pos += a.size
        return ModelParams(out)

    def astype(self, dtype) -> "ModelParams":
        return ModelParams({k: a.astype(dtype) for k, a in self._arrays.items()})

    def map(self, fn: Callable[[str, np.ndarray], np.ndarray]) -> "ModelParams":
        return ModelParams({k: fn(k, a) for k, a in self._arrays.items()})

    def replace(self, **updates: np.ndarray) -> "ModelParams":
        merged = dict(self._arrays)
        for k, v in updates.items():
            if k not in merged:
                raise KeyError(k)
            merged[k] = np.asarray(v)
        return ModelParams(merged)

    def with_updates(self, updates: Mapping[str, np.ndarray]) -> "ModelParams":
        merged = dict(self._arrays)
        merged.update(updates)
        return ModelParams(merged)

    def as_tensors(self, requires_grad: bool = False) -> dict[str, Tensor]:
        return {k: Tensor(a, requires_grad=requires_grad, name=k) for k, a in self._arrays.items()}

    def check_compatible(self, other: Mapping[str, np.ndarray]) -> None:
        if list(self) != sorted(other):
            raise ValueError("parameter name sets differ")
        for k, a in self._arrays.items():
            if np.shape(other[k]) != a.shape:
                raise ValueError(f"shape mismatch for {k!r}: {a.shape} vs {np.shape(other[k])}")


def value_and_grad(
    loss_fn: Callable[[Mapping[str, Tensor]], Tensor], params: ModelParams
) -> tuple[float, ModelParams]:
    """Evaluate ``loss_fn`` on ``params`` and return its exact reverse-mode gradient."""
    leaves = params.as_tensors(requires_grad=True)
    with Tape() as tape:
        loss = loss_fn(leaves)
    if not isinstance(loss, Tensor):
        # a loss that never touched a parameter
        return float(loss), params.map(lambda _, a: np.zeros_like(a))
    if loss.data.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.shape}")
    grads = tape.backward(loss, list(leaves.values()))
    return float(loss.data), ModelParams(dict(zip(leaves, grads)))


def gradient_of(
    loss_fn: Callable[[Mapping[str, Tensor]], Tensor], params: ModelParams
) -> ModelParams:
    return value_and_grad(loss_fn, params)[1]


def finite_difference_grad(
    loss_fn: Callable[[Mapping[str, Tensor]], Tensor],
    params: ModelParams,
    h: float = 1e-5,
    indices: np.ndarray | None = None,
) -> np.ndarray:
    """Central differences of ``loss_fn`` at the flattened ``indices`` (all by default).

    Evaluates the loss with plain arrays and no tape; independent of the
    reverse pass it is used to check.
    """
    flat = params.flatten().astype(np.float64)
    if indices is None:
        indices = np.arange(flat.size)
    out = np.empty(len(indices))
    for n, i in enumerate(indices):
        orig = flat[i]
        flat[i] = orig + h
        up = float(loss_fn(params.unflatten(flat).as_tensors()).data)
        flat[i] = orig - h
        down = float(loss_fn(params.unflatten(flat).as_tensors()).data)
        flat[i] = orig
        out[n] = (up - down) / (2 * h)
    return out
