"""Dual-encoder music/gesture retrieval model with a symmetric contrastive loss.

Each branch standardises its input, projects to the hidden width, adds
sinusoidal positions, then applies temporal blocks (pre-norm self-attention +
feed-forward, followed by averaging adjacent frames). The remaining frames are
mean-pooled, linearly projected and L2-normalised.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .audiofeat import BLOCK_LAYOUT, DESCRIPTOR_DIM
from .numcore import ModelParams, OptimizerState, Tensor, adamw_step, make_rng, nn, ops, value_and_grad
from .numcore.ops import check_finite
from .pose import POSE_DIM

log = logging.getLogger(__name__)

BRANCHES = ("music", "gesture")


@dataclass(frozen=True)
class RetrievalConfig:
    blocks: int = 2
    heads: int = 4
    hidden: int = 64
    ff_mult: int = 4
    dropout: float = 0.1
    embed_dim: int = 64
    temperature: float = 0.07
    max_T: int = 512
    music_dim: int = DESCRIPTOR_DIM
    pose_dim: int = POSE_DIM
    pooling: str = "mean"
    downsample: int = 2
    # gesture branch also sees frame-to-frame pose differences
    gesture_velocity: bool = True
    # std of Gaussian noise added to standardised inputs in training mode
    input_noise: float = 0.0
    # sinusoidal positions are scaled down so they do not swamp the projected input
    position_scale: float = 0.1

    def __post_init__(self):
        if self.hidden % self.heads:
            raise ValueError(f"hidden {self.hidden} not divisible by heads {self.heads}")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RetrievalModel:
    config: RetrievalConfig
    params: ModelParams
    # input standardisation per branch: name -> (mean, std)
    stats: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)


def init_retrieval(config: RetrievalConfig, seed: int = 0, stats=None, dtype=np.float32) -> RetrievalModel:
    c = config
    b = nn.ParamBuilder(make_rng(seed, "retrieval-init"), dtype)
    gesture_in = 2 * c.pose_dim if c.gesture_velocity else c.pose_dim
    for br, n_in in (("music", c.music_dim), ("gesture", gesture_in)):
        b.linear(f"{br}.in", n_in, c.hidden)
        for i in range(c.blocks):
            b.layer_norm(f"{br}.{i}.ln1", c.hidden)
            b.attention(f"{br}.{i}.attn", c.hidden)
            b.layer_norm(f"{br}.{i}.ln2", c.hidden)
            b.feed_forward(f"{br}.{i}.ff", c.hidden, c.ff_mult * c.hidden)
        b.layer_norm(f"{br}.ln_f", c.hidden)
        b.linear(f"{br}.proj", c.hidden, c.embed_dim)
    full = {
        "music": (np.zeros(c.music_dim), np.ones(c.music_dim)),
        "gesture": (np.zeros(c.pose_dim), np.ones(c.pose_dim)),
        "gesture_velocity": (np.zeros(c.pose_dim), np.ones(c.pose_dim)),
    }
    full.update(stats or {})
    full = {k: (np.asarray(m, dtype=dtype), np.asarray(s, dtype=dtype)) for k, (m, s) in full.items()}
    return RetrievalModel(c, ModelParams(b.arrays), full)


def input_statistics(arrays, floor: float) -> tuple[np.ndarray, np.ndarray]:
    stacked = np.concatenate([np.asarray(a, dtype=np.float64) for a in arrays], axis=0)
    return stacked.mean(axis=0), np.maximum(stacked.std(axis=0), floor)


def balance_music_blocks(std: np.ndarray, layout=BLOCK_LAYOUT) -> np.ndarray:
    """Multiply the std of every block by sqrt(width); a standardised block then has unit total variance."""
    if sum(n for _, n in layout) != std.shape[-1]:
        return std
    widths = np.concatenate([np.full(n, float(n)) for _, n in layout])
    return std * np.sqrt(widths)


def velocity(x: np.ndarray) -> np.ndarray:
    """Frame differences with a zero first row, same shape as ``x``."""
    x = np.asarray(x)
    v = np.zeros_like(x)
    v[..., 1:, :] = x[..., 1:, :] - x[..., :-1, :]
    return v


def _velocity_t(x: Tensor) -> Tensor:
    T = x.shape[-2]
    if T == 1:
        return ops.mul(x, 0.0)
    d = ops.sub(ops.take(x, (Ellipsis, slice(1, T), slice(None))),
                ops.take(x, (Ellipsis, slice(0, T - 1), slice(None))))
    zero = ops.mul(ops.take(x, (Ellipsis, slice(0, 1), slice(None))), 0.0)
    return ops.concat(zero, d, axis=-2)


def _standardize(x, mean: np.ndarray, std: np.ndarray, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return ops.mul(ops.sub(x, mean.astype(dtype)), (1.0 / std).astype(dtype))
    return Tensor(((np.asarray(x) - mean) / std).astype(dtype))


def _downsample(x: Tensor, factor: int) -> Tensor:
    T = x.shape[-2]
    if T % factor:
        last = ops.take(x, (Ellipsis, slice(T - 1, T), slice(None)))
        x = ops.concat(x, *([last] * (factor - T % factor)), axis=-2)
        T = x.shape[-2]
    lead = x.shape[:-2]
    x = ops.reshape(x, lead + (T // factor, factor, x.shape[-1]))
    return ops.mean(x, axis=-2)


def embed_branch(model: RetrievalModel, p: Mapping[str, Tensor], branch: str, x, rng=None,
                 normalize: bool = True) -> Tensor:
    """Differentiable embedding of a batch (..., T, in_dim) -> (..., embed_dim)."""
    c = model.config
    width = c.music_dim if branch == "music" else c.pose_dim
    if x.shape[-1] != width:
        raise ValueError(f"{branch} input width {x.shape[-1]} != {width}")
    T = x.shape[-2]
    if not 1 <= T <= c.max_T:
        raise ValueError(f"sequence length {T} outside [1, {c.max_T}]")
    dtype = p[f"{branch}.in.w"].dtype
    h = _standardize(x, *model.stats[branch], dtype)
    if branch == "gesture" and c.gesture_velocity:
        vel = _velocity_t(x) if isinstance(x, Tensor) else velocity(x)
        h = ops.concat(h, _standardize(vel, *model.stats["gesture_velocity"], dtype), axis=-1)
    if rng is not None and c.input_noise > 0:
        h = h + (c.input_noise * rng.standard_normal(h.shape)).astype(dtype)
    h = nn.linear(p, f"{branch}.in", h) + nn.sinusoidal_positions(T, c.hidden, dtype) * c.position_scale
    h = nn.dropout(h, c.dropout, rng)
    for i in range(c.blocks):
        a = nn.layer_norm(p, f"{branch}.{i}.ln1", h)
        h = h + nn.dropout(nn.multi_head_attention(p, f"{branch}.{i}.attn", a, a, c.heads), c.dropout, rng)
        a = nn.layer_norm(p, f"{branch}.{i}.ln2", h)
        h = h + nn.dropout(nn.feed_forward(p, f"{branch}.{i}.ff", a, c.dropout, rng), c.dropout, rng)
        if c.downsample > 1:
            h = _downsample(h, c.downsample)
    h = nn.layer_norm(p, f"{branch}.ln_f", h)
    pooled = ops.mean(h, axis=-2)
    z = nn.linear(p, f"{branch}.proj", pooled)
    return ops.l2_normalize(z) if normalize else z


def embed_music(model: RetrievalModel, m) -> np.ndarray:
    """Unit-norm clip embedding(s) of music descriptors (..., T, 438). Eval mode."""
    return embed_branch(model, model.params.as_tensors(), "music", np.asarray(m)).data


def embed_gesture(model: RetrievalModel, g) -> np.ndarray:
    """Unit-norm clip embedding(s) of pose sequences (..., T, 147). Eval mode."""
    return embed_branch(model, model.params.as_tensors(), "gesture", np.asarray(g)).data


def similarity_matrix(U, V, temperature: float, tol: float = 1e-4) -> Tensor:
    """``S[i, j] = <u_i, v_j> / temperature`` for unit-norm rows."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    for name, X in (("U", U), ("V", V)):
        data = X.data if isinstance(X, Tensor) else np.asarray(X)
        dev = np.abs(np.linalg.norm(data, axis=-1) - 1.0)
        if dev.size and dev.max() > tol:
            raise ValueError(f"{name} row {int(dev.argmax())} has norm deviating from 1 by {dev.max():.3g}")
    U = U if isinstance(U, Tensor) else Tensor(np.asarray(U))
    V = V if isinstance(V, Tensor) else Tensor(np.asarray(V))
    return ops.matmul(U, ops.swapaxes(V, -1, -2)) * (1.0 / temperature)


def clip_loss(S) -> Tensor:
    """Mean of the music->gesture (row) and gesture->music (column) cross-entropies toward the diagonal."""
    S = S if isinstance(S, Tensor) else Tensor(np.asarray(S, dtype=np.float64))
    if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[0] < 1:
        raise ValueError(f"similarity matrix must be square and nonempty, got {S.shape}")
    check_finite(S.data, "similarity matrix")
    B = S.shape[0]
    diag = (np.arange(B), np.arange(B))
    row_term = ops.mean(ops.take(ops.log_softmax(S, axis=1), diag)) * -1.0
    col_term = ops.mean(ops.take(ops.log_softmax(S, axis=0), diag)) * -1.0
    return (row_term + col_term) * 0.5


def clip_loss_terms(S) -> tuple[float, float]:
    """The (music->gesture, gesture->music) cross-entropy terms separately."""
    S = np.asarray(S, dtype=np.float64)
    B = len(S)
    lr = S - S.max(axis=1, keepdims=True)
    lr = lr - np.log(np.exp(lr).sum(axis=1, keepdims=True))
    lc = S - S.max(axis=0, keepdims=True)
    lc = lc - np.log(np.exp(lc).sum(axis=0, keepdims=True))
    return float(-lr[np.arange(B), np.arange(B)].mean()), float(-lc[np.arange(B), np.arange(B)].mean())


def batch_loss(model: RetrievalModel, p: Mapping[str, Tensor], music, gesture, rng=None) -> Tensor:
    u = embed_branch(model, p, "music", music, rng)
    v = embed_branch(model, p, "gesture", gesture, rng)
    return clip_loss(similarity_matrix(u, v, model.config.temperature))


# ---------------------------------------------------------------- training


@dataclass(frozen=True)
class RetrievalTrainConfig:
    epochs: int = 30
    batch_size: int = 16
    lr: float = 1e-3
    betas: tuple[float, float] = (0.5, 0.99)
    weight_decay: float = 0.0
    # cosine decay floor as a fraction of lr; 1.0 keeps lr constant
    min_lr_ratio: float = 0.05
    crop_frames: int = 150  # random aligned crop per training clip; 0 disables
    # lower bounds on per-dimension input std, so near-constant dims are not amplified
    music_std_floor: float = 0.02
    gesture_std_floor: float = 0.05
    # scale each music block so it carries equal total variance regardless of its width
    balance_blocks: bool = True


@dataclass
class TrainResult:
    model: object
    curve: list[tuple[int, float]]  # (epoch, loss); epoch 0 is the eval-mode loss before training


def _crop_batch(music: np.ndarray, gesture: np.ndarray, crop: int, rng: np.random.Generator):
    T = music.shape[1]
    if crop <= 0 or crop >= T:
        return music, gesture
    starts = rng.integers(0, T - crop + 1, size=len(music))
    idx = starts[:, None] + np.arange(crop)[None, :]
    rows = np.arange(len(music))[:, None]
    return music[rows, idx], gesture[rows, idx]


def _stack(clips) -> tuple[np.ndarray, np.ndarray]:
    lengths = {c.T for c in clips}
    if len(lengths) != 1:
        raise ValueError(f"clips must share one length for batching, got {sorted(lengths)}")
    return np.stack([c.music for c in clips]), np.stack([c.gesture for c in clips])


def eval_loss(model: RetrievalModel, music: np.ndarray, gesture: np.ndarray, batch_size: int) -> float:
    """Mean contrastive loss over consecutive eval-mode batches."""
    p = model.params.as_tensors()
    losses = []
    for s in range(0, len(music), batch_size):
        if len(music[s : s + batch_size]) < 2:
            continue
        losses.append(float(batch_loss(model, p, music[s : s + batch_size], gesture[s : s + batch_size]).data))
    return float(np.mean(losses))


def train_retrieval(clips: Sequence, config: RetrievalConfig, train: RetrievalTrainConfig | None = None,
                    seed: int = 0, on_epoch=None) -> TrainResult:
    """Fit both encoders with the symmetric contrastive loss using Adam.

    ``on_epoch(epoch, model, loss)`` is called after every epoch if given.
    """
    train = train or RetrievalTrainConfig()
    if len(clips) < 2:
        raise ValueError("need at least 2 training pairs")
    clips = sorted(clips, key=lambda c: c.id)
    music, gesture = _stack(clips)
    batch = train.batch_size
    if batch > len(clips):
        log.warning("batch size %d exceeds dataset size %d; clamping", batch, len(clips))
        batch = len(clips)
    m_mean, m_std = input_statistics(music, train.music_std_floor)
    if train.balance_blocks:
        m_std = balance_music_blocks(m_std)
    stats = {
        "music": (m_mean, m_std),
        "gesture": input_statistics(gesture, train.gesture_std_floor),
        "gesture_velocity": input_statistics(velocity(gesture), train.gesture_std_floor),
    }
    model = init_retrieval(config, seed, stats)
    steps = train.epochs * sum(min(batch, len(clips) - s) >= 2 for s in range(0, len(clips), batch))
    state = OptimizerState.for_params(
        model.params, train.lr, betas=train.betas, weight_decay=train.weight_decay,
        total_steps=None if train.min_lr_ratio == 1.0 else steps, min_lr=train.lr * train.min_lr_ratio,
    )
    curve = [(0, eval_loss(model, music, gesture, batch))]
    rng = make_rng(seed, "retrieval-train")
    for epoch in range(1, train.epochs + 1):
        order = rng.permutation(len(clips))
        losses = []
        for s in range(0, len(order), batch):
            idx = order[s : s + batch]
            if len(idx) < 2:
                continue
            mb, gb = _crop_batch(music[idx], gesture[idx], train.crop_frames, rng)
            drop_rng = make_rng(seed, "retrieval-dropout", epoch, s)
            loss, grads = value_and_grad(lambda p: batch_loss(model, p, mb, gb, drop_rng), model.params)
            model.params, state = adamw_step(state, model.params, grads)
            losses.append(loss)
        curve.append((epoch, float(np.mean(losses))))
        log.info("retrieval epoch %d loss %.4f", epoch, curve[-1][1])
        if on_epoch is not None:
            on_epoch(epoch, model, curve[-1][1])
    return TrainResult(model, curve)


def retrieval_accuracy(model: RetrievalModel, clips: Sequence, candidates: int = 16, seed: int = 0) -> float:
    """Top-1 music->gesture accuracy, each query ranked against ``candidates`` gestures (itself included)."""
    clips = sorted(clips, key=lambda c: c.id)
    music, gesture = _stack(clips)
    u = embed_music(model, music)
    v = embed_gesture(model, gesture)
    n = len(clips)
    k = min(candidates, n)
    rng = make_rng(seed, "retrieval-probe")
    hits = 0
    for i in range(n):
        others = np.delete(np.arange(n), i)
        pool = np.concatenate([[i], rng.choice(others, size=k - 1, replace=False)])
        hits += int(pool[np.argmax(v[pool] @ u[i])] == i)
    return hits / n
