"""Seeded counter-based random streams.

Streams are derived from a root seed plus string keys, so two call sites never
share state and adding a new consumer does not shift existing draws.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key_words(seed: int, keys: tuple) -> list[int]:
    h = hashlib.sha256(repr((int(seed),) + tuple(str(k) for k in keys)).encode()).digest()
    return [int.from_bytes(h[i : i + 4], "little") for i in range(0, 16, 4)]


def make_rng(seed: int, *keys) -> np.random.Generator:
    """Philox generator keyed by ``seed`` and any number of labels."""
    words = _key_words(seed, keys)
    key = words[0] | (words[1] << 32), words[2] | (words[3] << 32)
    return np.random.Generator(np.random.Philox(key=np.array(key, dtype=np.uint64)))


def derive_seed(seed: int, *keys) -> int:
    w = _key_words(seed, keys)
    return w[0] | (w[1] << 32)
