"""Generator training objectives: L1 reconstruction plus an embedding alignment term."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .numcore import Tensor, ops
from .retrieval import RetrievalModel, embed_branch


@dataclass(frozen=True)
class LossWeights:
    lambda_align: float = 0.5
    align_start_epoch: int = 50

    def __post_init__(self):
        if not (np.isfinite(self.lambda_align) and self.lambda_align >= 0):
            raise ValueError(f"lambda_align must be finite and >= 0, got {self.lambda_align}")
        if self.align_start_epoch < 0:
            raise ValueError(f"align_start_epoch must be >= 0, got {self.align_start_epoch}")

    def active(self, epoch: int) -> bool:
        return self.lambda_align > 0 and epoch >= self.align_start_epoch

    def to_dict(self) -> dict:
        return asdict(self)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _check_shapes(pred: Tensor, gt: Tensor) -> None:
    if pred.shape != gt.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {gt.shape}")
    if pred.ndim < 2:
        raise ValueError(f"expected (..., T, D) sequences, got shape {pred.shape}")


def rec_loss(pred, gt) -> Tensor:
    """Per-frame L1 norm averaged over time (and over any leading batch axes)."""
    pred, gt = _as_tensor(pred), _as_tensor(gt)
    _check_shapes(pred, gt)
    per_frame = ops.sum(ops.abs(pred - gt), axis=-1)
    return ops.mean(per_frame)


def align_loss(pred, gt, retrieval: RetrievalModel) -> Tensor:
    """``1 - cos`` between gesture-branch embeddings of prediction and target, averaged per clip.

    The retrieval parameters are constants here and the target embedding is
    computed outside the graph, so gradients reach ``pred`` only.
    """
    pred, gt = _as_tensor(pred), _as_tensor(gt)
    _check_shapes(pred, gt)
    frozen = retrieval.params.as_tensors()
    e_pred = ops.l2_normalize(embed_branch(retrieval, frozen, "gesture", pred, normalize=False))
    e_gt = embed_branch(retrieval, frozen, "gesture", np.asarray(gt.data), normalize=False).data
    norm = np.linalg.norm(e_gt, axis=-1, keepdims=True)
    if np.any(norm <= 1e-12):
        raise ops.ZeroNormError("target gesture embedding has zero norm")
    cos = ops.sum(e_pred * (e_gt / norm).astype(e_pred.dtype), axis=-1)
    return ops.mean(1.0 - cos)


def total_loss(pred, gt, weights: LossWeights, epoch: int, retrieval: RetrievalModel | None = None) -> Tensor:
    loss = rec_loss(pred, gt)
    if weights.active(epoch):
        if retrieval is None:
            raise ValueError("alignment term is active but no retrieval model was given")
        loss = loss + align_loss(pred, gt, retrieval) * weights.lambda_align
    return loss
