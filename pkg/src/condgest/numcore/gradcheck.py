"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .params import ModelParams, finite_difference_grad, value_and_grad
from .tensor import Tensor


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """Max elementwise ``|a-n| / max(|a|, |n|)``; entries where both are below ``floor`` count as exact."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.abs(a), np.abs(n))
    diff = np.abs(a - n)
    rel = np.where(denom < floor, 0.0, diff / np.maximum(denom, floor))
    return float(rel.max()) if rel.size else 0.0


def check_gradient(
    loss_fn: Callable[[Mapping[str, Tensor]], Tensor],
    params: ModelParams,
    h: float = 1e-5,
    n_samples: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Relative error between the reverse-mode gradient and central differences.

    ``params`` are promoted to float64. With ``n_samples`` only that many
    randomly chosen coordinates are compared.
    """
    params = params.astype(np.float64)
    _, grads = value_and_grad(loss_fn, params)
    flat = grads.flatten()
    idx = None
    if n_samples is not None and n_samples < flat.size:
        rng = rng or np.random.default_rng(0)
        idx = np.sort(rng.choice(flat.size, size=n_samples, replace=False))
    numeric = finite_difference_grad(loss_fn, params, h=h, indices=idx)
    return relative_error(flat if idx is None else flat[idx], numeric)
