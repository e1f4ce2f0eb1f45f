"""Clip container: one directory per clip plus a newline-delimited index."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..audiofeat import BLOCK_LAYOUT, DESCRIPTOR_DIM, layout_string, parse_layout
from ..pose import FPS, POSE_DIM, SMPL_JOINTS

FORMAT_TAG = "condgest-clip/1"
META_FILE = "clip.meta"
MUSIC_FILE = "music.f32"
GESTURE_FILE = "gesture.f32"
INDEX_FILE = "index.txt"


class ContainerError(ValueError):
    """Malformed or inconsistent clip directory."""


@dataclass
class ClipPair:
    id: str
    music: np.ndarray  # (T, 438) float32
    gesture: np.ndarray  # (T, 147) float32
    fps: int = FPS
    meta: dict[str, str] = field(default_factory=dict)
    layout: tuple[tuple[str, int], ...] = BLOCK_LAYOUT

    def __post_init__(self):
        self.music = np.ascontiguousarray(self.music, dtype=np.float32)
        self.gesture = np.ascontiguousarray(self.gesture, dtype=np.float32)
        if self.music.ndim != 2 or self.gesture.ndim != 2:
            raise ContainerError(f"clip {self.id}: music and gesture must be 2-d")
        if len(self.music) != len(self.gesture):
            raise ContainerError(
                f"clip {self.id}: music has {len(self.music)} frames, gesture {len(self.gesture)}"
            )
        if self.gesture.shape[1] != POSE_DIM:
            raise ContainerError(f"clip {self.id}: gesture width {self.gesture.shape[1]} != {POSE_DIM}")
        if self.music.shape[1] != sum(n for _, n in self.layout):
            raise ContainerError(f"clip {self.id}: music width does not match its block layout")
        if self.fps != FPS:
            raise ContainerError(f"clip {self.id}: fps {self.fps} != {FPS}")

    @property
    def T(self) -> int:
        return len(self.music)


def _write_meta(path: Path, fields: dict[str, str]) -> None:
    lines = [f"{k} = {v}" for k, v in fields.items()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_meta(path: str | Path) -> dict[str, str]:
    out = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if " = " not in line:
            raise ContainerError(f"{path}:{n}: expected 'key = value'")
        k, v = line.split(" = ", 1)
        out[k.strip()] = v.strip()
    return out


def _write_f32(path: Path, a: np.ndarray) -> None:
    path.write_bytes(np.ascontiguousarray(a, dtype="<f4").tobytes())


def _read_f32(path: Path, T: int, width: int) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) != T * width * 4:
        raise ContainerError(f"{path}: expected {T * width * 4} bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype="<f4").reshape(T, width).astype(np.float32)


def save_clip(clip: ClipPair, directory: str | Path, extra_meta: dict[str, str] | None = None) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    fields = {
        "format": FORMAT_TAG,
        "id": clip.id,
        "fps": str(clip.fps),
        "T": str(clip.T),
        "music_dim": str(clip.music.shape[1]),
        "pose_dim": str(POSE_DIM),
        "layout": layout_string(clip.layout),
        "joint_order": ",".join(SMPL_JOINTS),
    }
    for k in sorted(clip.meta):
        fields[f"tag.{k}"] = clip.meta[k]
    for k in sorted(extra_meta or {}):
        fields[k] = extra_meta[k]
    _write_meta(d / META_FILE, fields)
    _write_f32(d / MUSIC_FILE, clip.music)
    _write_f32(d / GESTURE_FILE, clip.gesture)
    return d


def load_clip(directory: str | Path) -> ClipPair:
    d = Path(directory)
    if not (d / META_FILE).is_file():
        raise ContainerError(f"{d}: missing {META_FILE}")
    meta = read_meta(d / META_FILE)
    try:
        T = int(meta["T"])
        fps = int(meta["fps"])
        layout = parse_layout(meta["layout"])
        clip_id = meta["id"]
    except (KeyError, ValueError) as exc:
        raise ContainerError(f"{d}: bad metadata ({exc})") from exc
    width = sum(n for _, n in layout)
    music = _read_f32(d / MUSIC_FILE, T, width)
    gesture = _read_f32(d / GESTURE_FILE, T, POSE_DIM)
    tags = {k[4:]: v for k, v in meta.items() if k.startswith("tag.")}
    return ClipPair(clip_id, music, gesture, fps=fps, meta=tags, layout=layout)


def save_descriptor(music: np.ndarray, directory: str | Path, clip_id: str,
                    extra_meta: dict[str, str] | None = None) -> Path:
    """Music-only clip directory (no gesture file), as written by ``extract``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    fields = {
        "format": FORMAT_TAG,
        "id": clip_id,
        "fps": str(FPS),
        "T": str(len(music)),
        "music_dim": str(music.shape[1]),
        "layout": layout_string(BLOCK_LAYOUT),
    }
    fields.update(extra_meta or {})
    _write_meta(d / META_FILE, fields)
    _write_f32(d / MUSIC_FILE, music)
    return d


def load_descriptor(path: str | Path) -> np.ndarray:
    """Music frames from a clip directory (gesture optional)."""
    d = Path(path)
    meta = read_meta(d / META_FILE)
    T = int(meta["T"])
    width = int(meta.get("music_dim", DESCRIPTOR_DIM))
    return _read_f32(d / MUSIC_FILE, T, width)


def load_gesture(path: str | Path) -> np.ndarray:
    d = Path(path)
    meta = read_meta(d / META_FILE)
    return _read_f32(d / GESTURE_FILE, int(meta["T"]), POSE_DIM)


def save_gesture(gesture: np.ndarray, directory: str | Path, clip_id: str,
                 extra_meta: dict[str, str] | None = None) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    fields = {
        "format": FORMAT_TAG,
        "id": clip_id,
        "fps": str(FPS),
        "T": str(len(gesture)),
        "pose_dim": str(POSE_DIM),
        "joint_order": ",".join(SMPL_JOINTS),
    }
    fields.update(extra_meta or {})
    _write_meta(d / META_FILE, fields)
    _write_f32(d / GESTURE_FILE, gesture)
    return d


def write_index(paths, index_file: str | Path, header: dict[str, str] | None = None) -> Path:
    """Write clip directories, relative to the index file's directory when possible.

    ``header`` entries are written first as ``# key = value`` comment lines.
    """
    index_file = Path(index_file)
    base = index_file.parent.resolve()
    lines = []
    for p in paths:
        p = Path(p).resolve()
        try:
            lines.append(p.relative_to(base).as_posix())
        except ValueError:
            lines.append(os.path.relpath(p, base))
    head = [f"# {k} = {v}" for k, v in (header or {}).items()]
    index_file.parent.mkdir(parents=True, exist_ok=True)
    index_file.write_text("".join(line + "\n" for line in head + lines), encoding="utf-8")
    return index_file


def read_index(index_file: str | Path) -> list[Path]:
    index_file = Path(index_file)
    if index_file.is_dir():
        index_file = index_file / INDEX_FILE
    base = index_file.parent
    lines = (line.strip() for line in index_file.read_text(encoding="utf-8").splitlines())
    return [base / line for line in lines if line and not line.startswith("#")]


def read_index_header(index_file: str | Path) -> dict[str, str]:
    index_file = Path(index_file)
    if index_file.is_dir():
        index_file = index_file / INDEX_FILE
    out = {}
    for line in index_file.read_text(encoding="utf-8").splitlines():
        if line.startswith("#") and "=" in line:
            k, v = line[1:].split("=", 1)
            out[k.strip()] = v.strip()
    return out


def load_dataset(index_file: str | Path) -> list[ClipPair]:
    return [load_clip(p) for p in read_index(index_file)]
