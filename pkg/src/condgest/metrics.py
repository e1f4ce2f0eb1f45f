"""Distribution and distance metrics computed in the retrieval embedding space."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numcore import make_rng

TAGS = ("generated", "real", "music")
DIVERSITY_CAP = 2000
CLAMP_EIG = 1e-8
REJECT_EIG = 1e-6


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class EmbeddingSet:
    vectors: np.ndarray  # (N, D)
    tag: str = "generated"
    ids: tuple[str, ...] = ()

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1:
            raise MetricError(f"embedding set must be (N>=1, D), got {v.shape}")
        if self.tag not in TAGS:
            raise MetricError(f"unknown tag {self.tag!r}; expected one of {TAGS}")
        bad = ~np.isfinite(v)
        if bad.any():
            raise MetricError(f"{self.tag} embeddings have a non-finite entry at {tuple(np.argwhere(bad)[0])}")
        if self.ids and len(self.ids) != len(v):
            raise MetricError(f"{len(self.ids)} ids for {len(v)} vectors")
        object.__setattr__(self, "vectors", v)
        object.__setattr__(self, "ids", tuple(self.ids))

    def __len__(self) -> int:
        return len(self.vectors)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def _vectors(x) -> np.ndarray:
    return x.vectors if isinstance(x, EmbeddingSet) else EmbeddingSet(np.atleast_2d(x)).vectors


def _psd_sqrt(C: np.ndarray, what: str) -> np.ndarray:
    w, V = np.linalg.eigh(C)
    if w.min() < -REJECT_EIG:
        raise MetricError(f"{what} has eigenvalue {w.min():.3g} < -{REJECT_EIG}; not a valid covariance")
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def fid(A, B) -> float:
    """Frechet distance between Gaussians fitted to two embedding sets.

    The cross term ``Tr((C_A C_B)^{1/2})`` is evaluated as the trace of the
    square root of the symmetric matrix ``C_A^{1/2} C_B C_A^{1/2}``, which has
    the same eigenvalues. Covariances use the N-1 estimator.
    """
    a, b = _vectors(A), _vectors(B)
    for name, x in (("A", a), ("B", b)):
        if len(x) < 2:
            raise MetricError(f"set {name} needs at least 2 vectors for a covariance, got {len(x)}")
    if a.shape[1] != b.shape[1]:
        raise MetricError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    C_a = np.atleast_2d(np.cov(a, rowvar=False))
    C_b = np.atleast_2d(np.cov(b, rowvar=False))
    root_a = _psd_sqrt(C_a, "covariance of A")
    M = root_a @ C_b @ root_a
    w = np.linalg.eigvalsh((M + M.T) / 2)
    if w.min() < -REJECT_EIG:
        raise MetricError(f"cross-covariance product has eigenvalue {w.min():.3g}; inputs are degenerate")
    w = np.where(w > -CLAMP_EIG, np.clip(w, 0.0, None), 0.0)
    value = float(np.sum((mu_a - mu_b) ** 2) + np.trace(C_a) + np.trace(C_b) - 2.0 * np.sum(np.sqrt(w)))
    if not np.isfinite(value):
        raise MetricError("FID evaluated to a non-finite value")
    # cancellation can leave a tiny negative residue for identical sets
    return max(value, 0.0)


def _paired(x, y, what: str) -> tuple[np.ndarray, np.ndarray]:
    a, b = _vectors(x), _vectors(y)
    if a.shape != b.shape:
        raise MetricError(f"{what} needs paired sets of equal shape, got {a.shape} and {b.shape}")
    if isinstance(x, EmbeddingSet) and isinstance(y, EmbeddingSet) and x.ids and y.ids and x.ids != y.ids:
        raise MetricError(f"{what}: sets are not paired (ids differ)")
    return a, b


def m_dist(gen, gt) -> float:
    """Mean Euclidean distance between paired generated and real gesture embeddings."""
    a, b = _paired(gen, gt, "m_dist")
    return float(np.mean(np.linalg.norm(a - b, axis=1)))


def mm_dist(gen, music) -> float:
    """Mean Euclidean distance between generated gesture embeddings and their music embeddings."""
    a, b = _paired(gen, music, "mm_dist")
    return float(np.mean(np.linalg.norm(a - b, axis=1)))


def diversity(gen, cap: int = DIVERSITY_CAP, seed: int = 0) -> float:
    """Mean distance over unordered pairs; above ``cap`` vectors a seeded subset is used."""
    v = _vectors(gen)
    if len(v) < 2:
        raise MetricError("diversity needs at least 2 vectors")
    if len(v) > cap:
        v = v[np.sort(make_rng(seed, "diversity").choice(len(v), size=cap, replace=False))]
    i, j = np.triu_indices(len(v), k=1)
    total = 0.0
    # chunked so large sets do not allocate every pair at once
    for s in range(0, len(i), 1 << 20):
        total += float(np.linalg.norm(v[i[s : s + (1 << 20)]] - v[j[s : s + (1 << 20)]], axis=1).sum())
    return total / len(i)


@dataclass
class MetricReport:
    fid: float
    m_dist: float
    mm_dist: float
    div: float
    n_generated: int
    n_real: int
    config_hash: str = ""
    extra: dict[str, str] = field(default_factory=dict)

    COLUMNS = (("FID", "fid"), ("M-Dist", "m_dist"), ("MM-Dist", "mm_dist"), ("Div", "div"))

    def to_text(self) -> str:
        lines = [
            f"fid = {self.fid!r}",
            f"m_dist = {self.m_dist!r}",
            f"mm_dist = {self.mm_dist!r}",
            f"div = {self.div!r}",
            f"n_generated = {self.n_generated}",
            f"n_real = {self.n_real}",
            "covariance = unbiased",
            f"config_hash = {self.config_hash}",
        ]
        lines += [f"{k} = {v}" for k, v in sorted(self.extra.items())]
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "MetricReport":
        kv = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if "=" in line:
                k, v = line.split("=", 1)
                kv[k.strip()] = v.strip()
        known = {"fid", "m_dist", "mm_dist", "div", "n_generated", "n_real", "config_hash", "covariance"}
        return cls(
            fid=float(kv["fid"]), m_dist=float(kv["m_dist"]), mm_dist=float(kv["mm_dist"]),
            div=float(kv["div"]), n_generated=int(kv["n_generated"]), n_real=int(kv["n_real"]),
            config_hash=kv.get("config_hash", ""),
            extra={k: v for k, v in kv.items() if k not in known},
        )

    def table(self, label: str = "model") -> str:
        head = f"{'':<14}" + "".join(f"{name:>10}" for name, _ in self.COLUMNS)
        row = f"{label:<14}" + "".join(f"{getattr(self, attr):>10.4f}" for _, attr in self.COLUMNS)
        return f"{head}\n{row}"


def evaluate_embeddings(gen: EmbeddingSet, real: EmbeddingSet, music: EmbeddingSet,
                        config_hash: str = "", seed: int = 0) -> MetricReport:
    return MetricReport(
        fid=fid(gen, real),
        m_dist=m_dist(gen, real),
        mm_dist=mm_dist(gen, music),
        div=diversity(gen, seed=seed),
        n_generated=len(gen),
        n_real=len(real),
        config_hash=config_hash,
    )
