from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .params import ModelParams

log = logging.getLogger(__name__)


def cosine_lr(step: int, total_steps: int, base_lr: float, min_lr: float) -> float:
    """Cosine decay from ``base_lr`` at step 0 to ``min_lr`` at ``total_steps``."""
    if total_steps < 1:
        raise ValueError("total_steps must be >= 1")
    if step < 0:
        raise ValueError("step must be >= 0")
    if step >= total_steps:
        if step > total_steps:
            log.warning("step %d beyond schedule end %d; using min_lr", step, total_steps)
        return float(min_lr)
    return float(min_lr + 0.5 * (base_lr - min_lr) * (1.0 + math.cos(math.pi * step / total_steps)))


@dataclass
class OptimizerState:
    lr: float
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0
    exp_avg: dict[str, np.ndarray] = field(default_factory=dict)
    exp_avg_sq: dict[str, np.ndarray] = field(default_factory=dict)
    # schedule: None keeps lr constant
    total_steps: int | None = None
    min_lr: float = 0.0

    @classmethod
    def for_params(cls, params: ModelParams, lr: float, **kwargs) -> "OptimizerState":
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        state = cls(lr=lr, **kwargs)
        for k, a in params.items():
            state.exp_avg[k] = np.zeros_like(a)
            state.exp_avg_sq[k] = np.zeros_like(a)
        return state

    def current_lr(self) -> float:
        if self.total_steps is None:
            return self.lr
        return cosine_lr(min(self.step, self.total_steps), self.total_steps, self.lr, self.min_lr)


def adamw_step(
    state: OptimizerState, params: ModelParams, grads: ModelParams
) -> tuple[ModelParams, OptimizerState]:
    """One decoupled-weight-decay Adam update.

    Moments are updated in place on ``state``; the parameter arrays are not
    mutated, a new :class:`ModelParams` is returned.
    """
    params.check_compatible(grads)
    if state.lr <= 0:
        raise ValueError("learning rate must be positive")
    lr = state.current_lr()
    state.step += 1
    b1, b2 = state.betas
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    out = {}
    for k, w in params.items():
        g = grads[k].astype(w.dtype, copy=False)
        m = state.exp_avg.setdefault(k, np.zeros_like(w))
        v = state.exp_avg_sq.setdefault(k, np.zeros_like(w))
        if m.shape != w.shape:
            raise ValueError(f"optimizer moment shape mismatch for {k!r}")
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        w_new = w * (1.0 - lr * state.weight_decay) if state.weight_decay else w.copy()
        w_new -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        out[k] = w_new.astype(w.dtype, copy=False)
    return ModelParams(out), state
