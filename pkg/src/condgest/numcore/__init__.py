"""Dense tensor algebra, reverse-mode differentiation, layers and optimizers."""

from . import nn, ops
from .ops import softmax_rows
from .optim import OptimizerState, adamw_step, cosine_lr
from .params import ModelParams, finite_difference_grad, gradient_of, value_and_grad
from .rng import derive_seed, make_rng
from .tensor import NonDifferentiableError, Tape, Tensor, as_tensor, registered_primitives

__all__ = [
    "ModelParams",
    "NonDifferentiableError",
    "OptimizerState",
    "Tape",
    "Tensor",
    "adamw_step",
    "as_tensor",
    "cosine_lr",
    "derive_seed",
    "finite_difference_grad",
    "gradient_of",
    "make_rng",
    "nn",
    "ops",
    "registered_primitives",
    "softmax_rows",
    "value_and_grad",
]
