"""Transformer music encoder and autoregressive gesture decoder.

The decoder consumes the initial pose ``g0`` as token 0 followed by the
gesture history; the output at position ``t`` is the prediction of frame
``t + 1``. Every decoder block runs pre-norm causal self-attention,
cross-attention to the full encoded clip and a feed-forward sublayer. The
prediction head is a two-layer MLP on ``[final decoder state ; last block's
cross-attention output]``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np

from .audiofeat import DESCRIPTOR_DIM
from .numcore import ModelParams, Tensor, make_rng, nn, ops
from .pose import POSE_DIM


@dataclass(frozen=True)
class GeneratorConfig:
    layers: int = 2
    heads: int = 4
    d_model: int = 64
    ff_mult: int = 4
    dropout: float = 0.1
    max_T: int = 512
    music_dim: int = DESCRIPTOR_DIM
    pose_dim: int = POSE_DIM
    norm: str = "pre"
    cross_attention: str = "every_block"
    positional: str = "sinusoidal"

    def __post_init__(self):
        if self.d_model % self.heads:
            raise ValueError(f"d_model {self.d_model} not divisible by heads {self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if min(self.layers, self.heads, self.d_model, self.max_T) < 1:
            raise ValueError("layers, heads, d_model and max_T must be positive")

    @property
    def ff_dim(self) -> int:
        return self.ff_mult * self.d_model

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class GeneratorModel:
    config: GeneratorConfig
    params: ModelParams
    # per-dimension standardisation of encoder and decoder inputs, fixed at init
    music_mean: np.ndarray
    music_std: np.ndarray
    pose_mean: np.ndarray | None = None
    pose_std: np.ndarray | None = None

    def __post_init__(self):
        dtype = self.music_mean.dtype
        if self.pose_mean is None:
            self.pose_mean = np.zeros(self.config.pose_dim, dtype)
        if self.pose_std is None:
            self.pose_std = np.ones(self.config.pose_dim, dtype)
        self.pose_mean = np.asarray(self.pose_mean, dtype)
        self.pose_std = np.asarray(self.pose_std, dtype)

    @property
    def n_params(self) -> int:
        return self.params.size


def init_generator(config: GeneratorConfig, seed: int = 0, music_mean=None, music_std=None,
                   dtype=np.float32, pose_mean=None, pose_std=None) -> GeneratorModel:
    c = config
    b = nn.ParamBuilder(make_rng(seed, "generator-init"), dtype)
    b.linear("enc.in", c.music_dim, c.d_model)
    for i in range(c.layers):
        b.layer_norm(f"enc.{i}.ln1", c.d_model)
        b.attention(f"enc.{i}.attn", c.d_model)
        b.layer_norm(f"enc.{i}.ln2", c.d_model)
        b.feed_forward(f"enc.{i}.ff", c.d_model, c.ff_dim)
    b.layer_norm("enc.ln_f", c.d_model)
    b.linear("dec.in", c.pose_dim, c.d_model)
    for i in range(c.layers):
        b.layer_norm(f"dec.{i}.ln1", c.d_model)
        b.attention(f"dec.{i}.self", c.d_model)
        b.layer_norm(f"dec.{i}.ln2", c.d_model)
        b.attention(f"dec.{i}.cross", c.d_model)
        b.layer_norm(f"dec.{i}.ln3", c.d_model)
        b.feed_forward(f"dec.{i}.ff", c.d_model, c.ff_dim)
    b.layer_norm("dec.ln_f", c.d_model)
    b.linear("head.fc1", 2 * c.d_model, c.d_model)
    b.linear("head.fc2", c.d_model, c.pose_dim)
    mean = np.zeros(c.music_dim) if music_mean is None else np.asarray(music_mean)
    std = np.ones(c.music_dim) if music_std is None else np.asarray(music_std)
    p_mean = np.zeros(c.pose_dim) if pose_mean is None else np.asarray(pose_mean)
    p_std = np.ones(c.pose_dim) if pose_std is None else np.asarray(pose_std)
    # start the head at the mean pose with per-dimension output scale matching the data
    b.arrays["head.fc2.w"] = (b.arrays["head.fc2.w"] * p_std).astype(dtype)
    b.arrays["head.fc2.b"] = p_mean.astype(dtype)
    return GeneratorModel(c, ModelParams(b.arrays), mean.astype(dtype), std.astype(dtype),
                          p_mean.astype(dtype), p_std.astype(dtype))


def music_statistics(music_arrays) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension mean and std over all frames; constant dimensions get std 1."""
    stacked = np.concatenate([np.asarray(m, dtype=np.float64) for m in music_arrays], axis=0)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    return mean, np.where(std > 1e-6, std, 1.0)


def pose_statistics(gesture_arrays, floor: float = 0.02) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension mean and std over all frames, std clamped below at ``floor``."""
    stacked = np.concatenate([np.asarray(g, dtype=np.float64) for g in gesture_arrays], axis=0)
    return stacked.mean(axis=0), np.maximum(stacked.std(axis=0), floor)


# ---------------------------------------------------------------- differentiable core


class _Ctx:
    """Forward-pass settings shared by the functional core."""

    def __init__(self, model: GeneratorModel, p: Mapping[str, Tensor], rng=None):
        self.c = model.config
        self.model = model
        self.p = p
        self.rng = rng  # None -> eval mode
        dtype = next(iter(p.values())).dtype
        self.dtype = dtype
        self.pe = nn.sinusoidal_positions(self.c.max_T, self.c.d_model, dtype)

    def drop(self, x: Tensor) -> Tensor:
        return nn.dropout(x, self.c.dropout, self.rng)


def _check_len(c: GeneratorConfig, T: int) -> None:
    if T > c.max_T:
        raise ValueError(f"sequence length {T} exceeds max_T {c.max_T}")
    if T < 1:
        raise ValueError("sequence must have at least one frame")


def _encode(ctx: _Ctx, m) -> Tensor:
    c, p = ctx.c, ctx.p
    m = np.asarray(m.data if isinstance(m, Tensor) else m)
    if m.shape[-1] != c.music_dim:
        raise ValueError(f"music descriptor width {m.shape[-1]} != {c.music_dim}")
    T = m.shape[-2]
    _check_len(c, T)
    x_in = ((m - ctx.model.music_mean) / ctx.model.music_std).astype(ctx.dtype)
    x = nn.linear(p, "enc.in", Tensor(x_in)) + ctx.pe[:T]
    x = ctx.drop(x)
    for i in range(c.layers):
        h = nn.layer_norm(p, f"enc.{i}.ln1", x)
        x = x + ctx.drop(nn.multi_head_attention(p, f"enc.{i}.attn", h, h, c.heads))
        h = nn.layer_norm(p, f"enc.{i}.ln2", x)
        x = x + ctx.drop(nn.feed_forward(p, f"enc.{i}.ff", h, c.dropout, ctx.rng))
    return nn.layer_norm(p, "enc.ln_f", x)


def _decoder_tokens(ctx: _Ctx, g0, g_hist) -> Tensor:
    """Stack ``[g0, g_hist...]`` along time and embed."""
    g0 = g0 if isinstance(g0, Tensor) else Tensor(np.asarray(g0, dtype=ctx.dtype))
    g0 = ops.reshape(g0, g0.shape[:-1] + (1, g0.shape[-1]))
    if g_hist is not None and g_hist.shape[-2] > 0:
        g_hist = g_hist if isinstance(g_hist, Tensor) else Tensor(np.asarray(g_hist, dtype=ctx.dtype))
        tokens = ops.concat(g0, g_hist, axis=-2)
    else:
        tokens = g0
    n = tokens.shape[-2]
    _check_len(ctx.c, n)
    return ctx.drop(_embed_poses(ctx, tokens, 0))


def _embed_poses(ctx: _Ctx, tokens: Tensor, start: int) -> Tensor:
    m = ctx.model
    z = ops.mul(ops.sub(tokens, m.pose_mean), (1.0 / m.pose_std).astype(ctx.dtype))
    return nn.linear(ctx.p, "dec.in", z) + ctx.pe[start : start + tokens.shape[-2]]


def _decode(ctx: _Ctx, f_m: Tensor, x: Tensor) -> Tensor:
    """Run all decoder blocks and the head over embedded tokens with a causal mask."""
    c, p = ctx.c, ctx.p
    n = x.shape[-2]
    mask = nn.causal_mask(n)
    z_m = None
    for i in range(c.layers):
        h = nn.layer_norm(p, f"dec.{i}.ln1", x)
        x = x + ctx.drop(nn.multi_head_attention(p, f"dec.{i}.self", h, h, c.heads, mask))
        h = nn.layer_norm(p, f"dec.{i}.ln2", x)
        z_m = nn.multi_head_attention(p, f"dec.{i}.cross", h, f_m, c.heads)
        x = x + ctx.drop(z_m)
        h = nn.layer_norm(p, f"dec.{i}.ln3", x)
        x = x + ctx.drop(nn.feed_forward(p, f"dec.{i}.ff", h, c.dropout, ctx.rng))
    z_g = nn.layer_norm(p, "dec.ln_f", x)
    return _head(ctx, z_g, z_m)


def _head(ctx: _Ctx, z_g: Tensor, z_m: Tensor) -> Tensor:
    h = ops.gelu(nn.linear(ctx.p, "head.fc1", ops.concat(z_g, z_m, axis=-1)))
    return nn.linear(ctx.p, "head.fc2", h)


def teacher_forced(model: GeneratorModel, p: Mapping[str, Tensor], m, g, g0, rng=None) -> Tensor:
    """Differentiable teacher-forced predictions, shape (..., T, pose_dim).

    Prediction ``t`` conditions on ``[g0, g_1 .. g_{t-1}]`` through one masked pass.
    ``g`` may be a Tensor (to differentiate with respect to targets).
    """
    g_shape = g.shape
    m_shape = np.shape(m.data if isinstance(m, Tensor) else m)
    if g_shape[-2] != m_shape[-2]:
        raise ValueError(f"music has {m_shape[-2]} frames but gesture has {g_shape[-2]}")
    if g_shape[-1] != model.config.pose_dim:
        raise ValueError(f"gesture width {g_shape[-1]} != {model.config.pose_dim}")
    ctx = _Ctx(model, p, rng)
    f_m = _encode(ctx, m)
    T = g_shape[-2]
    g_t = g if isinstance(g, Tensor) else Tensor(np.asarray(g, dtype=ctx.dtype))
    hist = ops.take(g_t, (Ellipsis, slice(0, T - 1), slice(None)))
    x = _decoder_tokens(ctx, g0, hist)
    return _decode(ctx, f_m, x)


# ---------------------------------------------------------------- numpy-facing API


def _eval_params(model: GeneratorModel) -> dict[str, Tensor]:
    return model.params.as_tensors()


def encode_music(model: GeneratorModel, m) -> np.ndarray:
    """Encoded music, (..., T, d). Eval mode, deterministic."""
    ctx = _Ctx(model, _eval_params(model))
    return _encode(ctx, m).data


def decode_step(model: GeneratorModel, f_m, g_hist, g0) -> np.ndarray:
    """Prediction for frame ``t + 1`` from encoded music and ``t`` history frames.

    Reference path: re-runs the full causal decoder over ``[g0, g_hist]``.
    """
    f_m = np.asarray(f_m)
    g_hist = np.asarray(g_hist).reshape(np.shape(g_hist)[:-1] + (model.config.pose_dim,))
    if g_hist.shape[-2] > f_m.shape[-2] - 1:
        raise ValueError(
            f"history of {g_hist.shape[-2]} frames is too long for a {f_m.shape[-2]}-frame clip"
        )
    ctx = _Ctx(model, _eval_params(model))
    x = _decoder_tokens(ctx, g0, g_hist)
    out = _decode(ctx, Tensor(f_m.astype(ctx.dtype)), x)
    return out.data[..., -1, :]


def forward_teacher_forced(model: GeneratorModel, m, g, g0) -> np.ndarray:
    return teacher_forced(model, _eval_params(model), m, g, g0).data


def generate_sequence(model: GeneratorModel, m, g0) -> np.ndarray:
    """Autoregressive generation of T frames, (..., T, pose_dim).

    Uses cached keys/values per decoder layer; mathematically identical to
    calling :func:`decode_step` on the growing history.
    """
    c = model.config
    p = _eval_params(model)
    ctx = _Ctx(model, p)
    f_m = _encode(ctx, m)
    T = f_m.shape[-2]
    g0 = np.asarray(g0, dtype=ctx.dtype)
    lead = f_m.shape[:-2]
    g0 = np.broadcast_to(g0, lead + (c.pose_dim,))

    cross_kv = [nn.project_kv(p, f"dec.{i}.cross", f_m, c.heads) for i in range(c.layers)]
    self_k: list[np.ndarray | None] = [None] * c.layers
    self_v: list[np.ndarray | None] = [None] * c.layers
    out = np.empty(lead + (T, c.pose_dim), dtype=ctx.dtype)
    token = g0[..., None, :]
    for t in range(T):
        x = _embed_poses(ctx, Tensor(token), t)
        z_m = None
        for i in range(c.layers):
            h = nn.layer_norm(p, f"dec.{i}.ln1", x)
            k_new, v_new = nn.project_kv(p, f"dec.{i}.self", h, c.heads)
            if self_k[i] is None:
                self_k[i], self_v[i] = k_new.data, v_new.data
            else:
                self_k[i] = np.concatenate([self_k[i], k_new.data], axis=-2)
                self_v[i] = np.concatenate([self_v[i], v_new.data], axis=-2)
            x = x + nn.attend(p, f"dec.{i}.self", h, Tensor(self_k[i]), Tensor(self_v[i]), c.heads)
            h = nn.layer_norm(p, f"dec.{i}.ln2", x)
            z_m = nn.attend(p, f"dec.{i}.cross", h, *cross_kv[i], c.heads)
            x = x + z_m
            h = nn.layer_norm(p, f"dec.{i}.ln3", x)
            x = x + nn.feed_forward(p, f"dec.{i}.ff", h)
        pred = _head(ctx, nn.layer_norm(p, "dec.ln_f", x), z_m).data
        out[..., t, :] = pred[..., 0, :]
        token = pred
    return out


def count_params(config: GeneratorConfig) -> int:
    """Closed-form parameter count."""
    c = config
    d, f = c.d_model, c.ff_dim

    def lin(a, b):
        return a * b + b

    ln = 2 * d
    attn = 4 * lin(d, d)
    ff = lin(d, f) + lin(f, d)
    enc = lin(c.music_dim, d) + c.layers * (2 * ln + attn + ff) + ln
    dec = lin(c.pose_dim, d) + c.layers * (3 * ln + 2 * attn + ff) + ln
    head = lin(2 * d, d) + lin(d, c.pose_dim)
    return enc + dec + head
