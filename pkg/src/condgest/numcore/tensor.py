"""Tape-based reverse-mode differentiation over coarse numpy primitives.

A :class:`Tensor` wraps a numpy array. While a :class:`Tape` is active, every
registered primitive applied to a tensor that requires a gradient appends one
record to the tape; :meth:`Tape.backward` walks those records in reverse.
Outside a tape (or when no input requires a gradient) primitives are plain
numpy calls with no bookkeeping.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "NonDifferentiableError",
    "Tape",
    "Tensor",
    "as_tensor",
    "primitive",
    "registered_primitives",
]


class NonDifferentiableError(TypeError):
    """Raised when a non-differentiable operation is recorded on a tape."""


_state = threading.local()


def _active_tape() -> "Tape | None":
    return getattr(_state, "tape", None)


class Tensor:
    __slots__ = ("data", "requires_grad", "name")

    # numpy must not silently unwrap tensors: np.exp(t) would escape the tape.
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __array__(self, dtype=None, copy=None):
        raise NonDifferentiableError(
            "implicit conversion of Tensor to ndarray; use .data or a registered primitive"
        )

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return len(self.data)

    # operator sugar, all routed through registered primitives
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        if isinstance(other, Tensor):
            return ops.mul(self, ops.reciprocal(other))
        return ops.mul(self, 1.0 / other)

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.take(self, index)

    @property
    def T(self):
        from . import ops
        return ops.swapaxes(self, -1, -2)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _Record:
    __slots__ = ("name", "inputs", "output", "vjp")

    def __init__(self, name, inputs, output, vjp):
        self.name = name
        self.inputs = inputs
        self.output = output
        self.vjp = vjp


class Tape:
    """Records primitive applications for one reverse pass.

    Use as a context manager; tapes do not nest.
    """

    def __init__(self):
        self.records: list[_Record] = []

    def __enter__(self) -> "Tape":
        if _active_tape() is not None:
            raise RuntimeError("a tape is already active on this thread")
        _state.tape = self
        return self

    def __exit__(self, *exc) -> None:
        _state.tape = None

    def backward(self, output: Tensor, wrt: Sequence[Tensor], seed=None) -> list[np.ndarray]:
        """Gradients of ``output`` with respect to each tensor in ``wrt``.

        ``output`` must be a scalar unless ``seed`` (the upstream gradient) is
        given. Tensors in ``wrt`` that do not influence the output get zeros.
        """
        if seed is None:
            if output.data.size != 1:
                raise ValueError("backward from a non-scalar output needs an explicit seed")
            seed = np.ones_like(output.data)
        grads: dict[int, np.ndarray] = {id(output): np.asarray(seed, dtype=output.dtype)}
        for rec in reversed(self.records):
            g = grads.pop(id(rec.output), None)
            if g is None:
                continue
            in_grads = rec.vjp(g)
            for t, gi in zip(rec.inputs, in_grads):
                if gi is None or t is None or not t.requires_grad:
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
        out = []
        for t in wrt:
            g = grads.get(id(t))
            out.append(np.zeros_like(t.data) if g is None else g.astype(t.dtype, copy=False))
        return out


_REGISTRY: dict[str, bool] = {}


def registered_primitives() -> dict[str, bool]:
    """Name -> differentiable flag for every registered primitive."""
    return dict(_REGISTRY)


def primitive(name: str, differentiable: bool = True):
    """Register ``fn`` as a primitive.

    ``fn(*args, **kwargs)`` receives the raw array of every positional Tensor
    argument (other positional values pass through unchanged) and returns
    ``(out_array, vjp)`` where ``vjp(g)`` maps the output gradient to a tuple
    of input gradients (``None`` for constant inputs).
    Non-differentiable primitives return just the output array and refuse to
    run on tape-tracked inputs.
    """

    def deco(fn: Callable):
        _REGISTRY[name] = differentiable

        def wrapper(*args, **kwargs):
            # python scalars stay weakly typed so float32 graphs remain float32
            tensors = tuple(a if isinstance(a, Tensor) else None for a in args)
            tape = _active_tape()
            tracked = tape is not None and any(t is not None and t.requires_grad for t in tensors)
            arrays = [a.data if isinstance(a, Tensor) else a for a in args]
            if not differentiable:
                if tracked:
                    raise NonDifferentiableError(
                        f"primitive '{name}' is not differentiable and cannot be recorded"
                    )
                return Tensor(fn(*arrays, **kwargs))
            out_data, vjp = fn(*arrays, **kwargs)
            out = Tensor(out_data, requires_grad=tracked)
            if tracked:
                tape.records.append(_Record(name, tensors, out, vjp))
            return out

        wrapper.__name__ = fn.__name__
        wrapper.__doc__ = fn.__doc__
        wrapper.primitive_name = name
        return wrapper

    return deco
