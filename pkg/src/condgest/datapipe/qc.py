"""Frame- and sequence-level quality checks for gesture clips."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from ..pose import DEGENERATE_EPS, N_JOINTS, ROT_DIM, TRANS_DIM, geodesic_angle
from .clip import ClipPair

FRAME_FLAGS = ("non-finite", "rotation-invalid", "translation-outlier", "velocity-jump")
SEQUENCE_FLAGS = ("frozen-interval", "global-shift", "failure-ratio")


@dataclass(frozen=True)
class QcThresholds:
    translation_box: float = 5.0  # metres, per root coordinate
    max_rot_velocity: float = 30.0  # rad/s, per joint
    frozen_eps: float = 1e-4  # L-inf frame-to-frame change
    frozen_seconds: float = 2.0
    max_root_jump: float = 0.5  # metres between adjacent frames
    max_failure_ratio: float = 0.05
    rotation_eps: float = DEGENERATE_EPS

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class QcReport:
    clip_id: str
    frame_flags: np.ndarray  # (T, 4) bool, columns in FRAME_FLAGS order
    sequence_flags: dict[str, bool]
    reasons: list[str] = field(default_factory=list)

    @property
    def accepted(self) -> bool:
        return not self.reasons

    @property
    def verdict(self) -> str:
        return "accept" if self.accepted else "reject"

    @property
    def flagged_frames(self) -> np.ndarray:
        return np.nonzero(self.frame_flags.any(axis=1))[0]

    @property
    def failure_ratio(self) -> float:
        return float(self.frame_flags.any(axis=1).mean())

    def flag_counts(self) -> dict[str, int]:
        return {name: int(self.frame_flags[:, i].sum()) for i, name in enumerate(FRAME_FLAGS)}

    def summary(self) -> str:
        counts = ", ".join(f"{k}={v}" for k, v in self.flag_counts().items() if v)
        why = ",".join(self.reasons) if self.reasons else "-"
        return f"{self.clip_id}: {self.verdict} reasons={why} flags[{counts or 'none'}]"


def _longest_run(mask: np.ndarray) -> int:
    best = run = 0
    for m in mask:
        run = run + 1 if m else 0
        best = max(best, run)
    return best


def validate_clip(clip: ClipPair, thresholds: QcThresholds | None = None) -> QcReport:
    th = thresholds or QcThresholds()
    g = clip.gesture.astype(np.float64)
    T = len(g)
    finite = np.isfinite(g).all(axis=1)

    trans = g[:, :TRANS_DIM]
    rot = g[:, TRANS_DIM:].reshape(T, N_JOINTS, ROT_DIM)

    # Gram-Schmidt validity per joint, evaluated without raising
    a1, a2 = rot[..., :3], rot[..., 3:]
    n1 = np.linalg.norm(a1, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        b1 = a1 / n1[..., None]
        resid = a2 - np.sum(b1 * a2, axis=-1, keepdims=True) * b1
        n2 = np.linalg.norm(resid, axis=-1)
    rot_ok = (n1 > th.rotation_eps) & (n2 > th.rotation_eps)
    rot_invalid = finite & ~rot_ok.all(axis=1)

    with np.errstate(invalid="ignore"):
        trans_outlier = finite & (np.abs(trans) > th.translation_box).any(axis=1)

    valid = finite & ~rot_invalid
    vel_jump = np.zeros(T, dtype=bool)
    if T > 1:
        R = np.full((T, N_JOINTS, 3, 3), np.nan)
        b2 = resid / np.where(rot_ok, n2, 1.0)[..., None]
        R_ok = np.stack([b1, b2, np.cross(b1, b2)], axis=-1)
        R[valid] = R_ok[valid]
        pair_ok = valid[1:] & valid[:-1]
        ang = np.zeros((T - 1, N_JOINTS))
        ang[pair_ok] = geodesic_angle(R[:-1][pair_ok], R[1:][pair_ok])
        vel_jump[1:] = pair_ok & (ang.max(axis=1) * clip.fps > th.max_rot_velocity)

    frame_flags = np.stack([~finite, rot_invalid, trans_outlier, vel_jump], axis=1)

    seq = dict.fromkeys(SEQUENCE_FLAGS, False)
    if T > 1:
        both = finite[1:] & finite[:-1]
        change = np.full(T - 1, np.inf)
        change[both] = np.abs(g[1:][both] - g[:-1][both]).max(axis=1)
        frozen_span = _longest_run(change < th.frozen_eps) / clip.fps
        seq["frozen-interval"] = frozen_span > th.frozen_seconds
        jump = np.zeros(T - 1)
        jump[both] = np.linalg.norm(trans[1:][both] - trans[:-1][both], axis=1)
        seq["global-shift"] = bool((jump > th.max_root_jump).any())
    seq["failure-ratio"] = bool(frame_flags.any(axis=1).mean() > th.max_failure_ratio)
    reasons = [k for k in SEQUENCE_FLAGS if seq[k]]
    return QcReport(clip.id, frame_flags, seq, reasons)
