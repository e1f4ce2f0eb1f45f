"""Generator training loop (teacher forcing, AdamW with a cosine schedule)."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .generator import GeneratorConfig, GeneratorModel, init_generator, music_statistics, pose_statistics, teacher_forced
from .losses import LossWeights, total_loss
from .numcore import OptimizerState, adamw_step, make_rng, value_and_grad
from .retrieval import RetrievalModel, _crop_batch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GeneratorTrainConfig:
    epochs: int = 50
    batch_size: int = 4
    lr: float = 2e-3
    min_lr_ratio: float = 0.01  # cosine floor as a fraction of lr
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.01
    crop_frames: int = 120  # random aligned window per training clip; 0 trains on whole clips

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.crop_frames < 0:
            raise ValueError("crop_frames must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class GeneratorTrainResult:
    model: GeneratorModel
    curve: list[tuple[int, float]]  # (epoch, mean training loss); epoch 0 is the loss at initialisation


def initial_pose(gesture: np.ndarray) -> np.ndarray:
    """The pose a clip starts from: its first ground-truth frame."""
    return np.asarray(gesture)[..., 0, :]


def _stack(clips):
    lengths = {c.T for c in clips}
    if len(lengths) != 1:
        raise ValueError(f"clips must share one length for batching, got {sorted(lengths)}")
    return np.stack([c.music for c in clips]), np.stack([c.gesture for c in clips])


def _batch_loss(model, p, m, g, weights, epoch, retrieval, rng=None):
    pred = teacher_forced(model, p, m, g, initial_pose(g), rng)
    return total_loss(pred, g, weights, epoch, retrieval)


def untrained_generator(clips: Sequence, config: GeneratorConfig, seed: int = 0) -> GeneratorModel:
    """A freshly initialised model with music statistics taken from ``clips``."""
    mean, std = music_statistics([c.music for c in clips])
    p_mean, p_std = pose_statistics([c.gesture for c in clips])
    return init_generator(config, seed, mean, std, pose_mean=p_mean, pose_std=p_std)


def train_generator(
    clips: Sequence,
    config: GeneratorConfig,
    train: GeneratorTrainConfig | None = None,
    weights: LossWeights | None = None,
    retrieval: RetrievalModel | None = None,
    seed: int = 0,
    on_epoch: Callable[[int, GeneratorModel, float], None] | None = None,
) -> GeneratorTrainResult:
    train = train or GeneratorTrainConfig()
    weights = weights or LossWeights()
    if weights.lambda_align > 0 and retrieval is None:
        raise ValueError(
            "lambda_align > 0 needs a trained retrieval model: the alignment term compares "
            "embeddings from a frozen retrieval gesture encoder"
        )
    if len(clips) < 1:
        raise ValueError("need at least one training clip")
    clips = sorted(clips, key=lambda c: c.id)
    music, gesture = _stack(clips)
    batch = train.batch_size
    if batch > len(clips):
        log.warning("batch size %d exceeds dataset size %d; clamping", batch, len(clips))
        batch = len(clips)
    model = untrained_generator(clips, config, seed)
    steps_per_epoch = -(-len(clips) // batch)
    state = OptimizerState.for_params(
        model.params, train.lr, betas=train.betas, weight_decay=train.weight_decay,
        total_steps=train.epochs * steps_per_epoch, min_lr=train.lr * train.min_lr_ratio,
    )
    p0 = model.params.as_tensors()
    init = [float(_batch_loss(model, p0, music[s : s + batch], gesture[s : s + batch], weights, 0, retrieval).data)
            for s in range(0, len(clips), batch)]
    curve = [(0, float(np.mean(init)))]
    rng = make_rng(seed, "generator-train")
    for epoch in range(1, train.epochs + 1):
        order = rng.permutation(len(clips))
        losses = []
        for s in range(0, len(order), batch):
            idx = order[s : s + batch]
            mb, gb = _crop_batch(music[idx], gesture[idx], train.crop_frames, rng)
            drop_rng = make_rng(seed, "generator-dropout", epoch, s)
            loss, grads = value_and_grad(
                lambda p: _batch_loss(model, p, mb, gb, weights, epoch, retrieval, drop_rng), model.params
            )
            model.params, state = adamw_step(state, model.params, grads)
            losses.append(loss)
        curve.append((epoch, float(np.mean(losses))))
        log.info("generator epoch %d loss %.4f", epoch, curve[-1][1])
        if on_epoch is not None:
            on_epoch(epoch, model, curve[-1][1])
    return GeneratorTrainResult(model, curve)
