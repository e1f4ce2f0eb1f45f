"""Dataset splitting and fixed-length windowing."""

from __future__ import annotations

import logging
import math
from typing import Sequence

from ..numcore.rng import make_rng
from ..pose import FPS
from .clip import ClipPair

log = logging.getLogger(__name__)


def split_dataset(clip_ids: Sequence[str], ratio: float = 0.7, seed: int = 0) -> tuple[list[str], list[str]]:
    """Seeded disjoint train/test split with ``round(ratio * N)`` training ids.

    Ids are sorted before shuffling so the split depends only on the id set.
    """
    ids = sorted(clip_ids)
    if len(ids) < 2:
        raise ValueError("need at least 2 clips to split")
    if len(set(ids)) != len(ids):
        raise ValueError("clip ids must be unique")
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie in (0, 1)")
    n_train = int(math.floor(ratio * len(ids) + 0.5))
    n_train = min(max(n_train, 1), len(ids) - 1)
    order = make_rng(seed, "split").permutation(len(ids))
    train = sorted(ids[i] for i in order[:n_train])
    test = sorted(ids[i] for i in order[n_train:])
    return train, test


def window_clips(clip: ClipPair, seconds: float = 10.0, stride_seconds: float | None = None) -> list[ClipPair]:
    """Cut ``clip`` into full windows of ``seconds`` at the given stride (default: non-overlapping)."""
    win = int(round(seconds * clip.fps))
    stride = win if stride_seconds is None else int(round(stride_seconds * clip.fps))
    if win < 1 or stride < 1:
        raise ValueError("window and stride must be at least one frame")
    if clip.T < win:
        log.warning("clip %s has %d frames, shorter than the %d-frame window", clip.id, clip.T, win)
        return []
    out = []
    for start in range(0, clip.T - win + 1, stride):
        meta = dict(clip.meta)
        meta.update(parent=clip.id, offset=str(start))
        out.append(ClipPair(
            f"{clip.id}@{start}",
            clip.music[start : start + win].copy(),
            clip.gesture[start : start + win].copy(),
            fps=clip.fps,
            meta=meta,
            layout=clip.layout,
        ))
    return out


WINDOW_FRAMES = 10 * FPS
