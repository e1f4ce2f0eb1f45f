"""SMPL pose vectors and the continuous 6D rotation representation.

A pose frame is 147 numbers: root translation (3) followed by 24 joint
rotations in SMPL order, each stored as the first two columns of its rotation
matrix (6 numbers, column-major: ``[R[:,0], R[:,1]]``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SMPL_JOINTS = (
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee",
    "spine2", "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot",
    "neck", "left_collar", "right_collar", "head", "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow", "left_wrist", "right_wrist", "left_hand", "right_hand",
)
N_JOINTS = 24
ROT_DIM = 6
TRANS_DIM = 3
POSE_DIM = TRANS_DIM + N_JOINTS * ROT_DIM
FPS = 30

assert len(SMPL_JOINTS) == N_JOINTS
assert POSE_DIM == 147

JOINT_INDEX = {name: i for i, name in enumerate(SMPL_JOINTS)}

DEGENERATE_EPS = 1e-8


class DegenerateRotationError(ValueError):
    """A 6D block whose columns cannot be orthonormalised."""

    def __init__(self, message: str, index: tuple[int, ...]):
        super().__init__(message)
        self.index = index


class InvalidRotationError(ValueError):
    pass


def sixd_to_rotmat(r, eps: float = DEGENERATE_EPS) -> np.ndarray:
    """Gram-Schmidt the two stored columns into a proper rotation.

    Accepts any leading shape ``(..., 6)`` and returns ``(..., 3, 3)``. For a
    pose array of shape (T, 24, 6) the index in a degeneracy error is
    (frame, joint).
    """
    r = np.asarray(r, dtype=np.float64)
    if r.shape[-1] != ROT_DIM:
        raise ValueError(f"expected trailing dimension 6, got {r.shape}")
    a1, a2 = r[..., :3], r[..., 3:]
    n1 = np.linalg.norm(a1, axis=-1, keepdims=True)
    _raise_if_small(n1[..., 0], eps, "first column")
    b1 = a1 / n1
    u = a2 - np.sum(b1 * a2, axis=-1, keepdims=True) * b1
    n2 = np.linalg.norm(u, axis=-1, keepdims=True)
    _raise_if_small(n2[..., 0], eps, "second column residual")
    b2 = u / n2
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=-1)


def _raise_if_small(norms: np.ndarray, eps: float, what: str) -> None:
    bad = ~(norms > eps)  # also catches NaN
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0]) if bad.ndim else ()
        raise DegenerateRotationError(f"degenerate 6D rotation ({what} norm <= {eps}) at index {idx}", idx)


def rotmat_to_sixd(R, tol: float = 1e-4) -> np.ndarray:
    """First two columns of each rotation, ``(..., 3, 3) -> (..., 6)``."""
    R = np.asarray(R, dtype=np.float64)
    if R.shape[-2:] != (3, 3):
        raise ValueError(f"expected (..., 3, 3), got {R.shape}")
    gram = np.swapaxes(R, -1, -2) @ R
    err = np.abs(gram - np.eye(3)).max(axis=(-2, -1))
    det = np.linalg.det(R)
    bad = ~((err <= tol) & (det > 0))
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0]) if bad.ndim else ()
        raise InvalidRotationError(
            f"not a proper rotation at index {idx} (orthogonality error {np.max(err):.3g})"
        )
    return np.concatenate([R[..., :, 0], R[..., :, 1]], axis=-1)


def axis_angle_to_rotmat(aa) -> np.ndarray:
    """Rodrigues formula, ``(..., 3) -> (..., 3, 3)``."""
    aa = np.asarray(aa, dtype=np.float64)
    theta = np.linalg.norm(aa, axis=-1, keepdims=True)
    safe = np.where(theta > 1e-12, theta, 1.0)
    k = aa / safe
    kx, ky, kz = k[..., 0], k[..., 1], k[..., 2]
    zero = np.zeros_like(kx)
    K = np.stack(
        [np.stack([zero, -kz, ky], -1), np.stack([kz, zero, -kx], -1), np.stack([-ky, kx, zero], -1)],
        axis=-2,
    )
    s = np.sin(theta)[..., None]
    c = np.cos(theta)[..., None]
    eye = np.broadcast_to(np.eye(3), K.shape)
    R = eye + s * K + (1 - c) * (K @ K)
    return np.where((theta > 1e-12)[..., None], R, eye)


def geodesic_angle(R1, R2) -> np.ndarray:
    """Rotation angle of ``R1^T R2`` in radians."""
    rel = np.swapaxes(np.asarray(R1), -1, -2) @ np.asarray(R2)
    cos = (np.trace(rel, axis1=-2, axis2=-1) - 1.0) / 2.0
    return np.arccos(np.clip(cos, -1.0, 1.0))


def pack_pose(translation, rotations) -> np.ndarray:
    """Concatenate root translation (..., 3) and joint rotations (..., 24, 6)."""
    translation = np.asarray(translation)
    rotations = np.asarray(rotations)
    if translation.shape[-1:] != (TRANS_DIM,):
        raise ValueError(f"translation must end in 3, got {translation.shape}")
    if rotations.shape[-2:] != (N_JOINTS, ROT_DIM):
        raise ValueError(f"rotations must end in (24, 6), got {rotations.shape}")
    if translation.shape[:-1] != rotations.shape[:-2]:
        raise ValueError("translation and rotation leading shapes differ")
    flat = rotations.reshape(rotations.shape[:-2] + (N_JOINTS * ROT_DIM,))
    return np.concatenate([translation, flat.astype(translation.dtype, copy=False)], axis=-1)


def unpack_pose(v) -> tuple[np.ndarray, np.ndarray]:
    v = np.asarray(v)
    if v.shape[-1] != POSE_DIM:
        raise ValueError(f"pose vector must have trailing dimension {POSE_DIM}, got {v.shape}")
    translation = v[..., :TRANS_DIM].copy()
    rotations = v[..., TRANS_DIM:].reshape(v.shape[:-1] + (N_JOINTS, ROT_DIM)).copy()
    return translation, rotations


def rest_pose(dtype=np.float32) -> np.ndarray:
    """Zero translation with every joint at the identity rotation."""
    rot = np.tile(np.array([1.0, 0, 0, 0, 1.0, 0]), (N_JOINTS, 1))
    return pack_pose(np.zeros(3), rot).astype(dtype)


@dataclass(frozen=True)
class PoseFrame:
    translation: np.ndarray
    rotations: np.ndarray

    def __post_init__(self):
        if np.shape(self.translation) != (3,) or np.shape(self.rotations) != (N_JOINTS, ROT_DIM):
            raise ValueError("PoseFrame needs translation (3,) and rotations (24, 6)")

    @classmethod
    def from_vector(cls, v) -> "PoseFrame":
        return cls(*unpack_pose(v))

    def to_vector(self) -> np.ndarray:
        return pack_pose(self.translation, self.rotations)

    def rotation_matrices(self) -> np.ndarray:
        return sixd_to_rotmat(self.rotations)


@dataclass(frozen=True)
class GestureSequence:
    frames: np.ndarray  # (T, 147)
    fps: int = FPS

    def __post_init__(self):
        if self.frames.ndim != 2 or self.frames.shape[1] != POSE_DIM or len(self.frames) < 1:
            raise ValueError(f"gesture frames must be (T>=1, {POSE_DIM}), got {self.frames.shape}")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def duration(self) -> float:
        return len(self) / self.fps

    def frame(self, t: int) -> PoseFrame:
        return PoseFrame.from_vector(self.frames[t])
