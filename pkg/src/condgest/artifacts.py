"""Run configuration files and model checkpoints.

A run config is UTF-8 text with one ``section.key = value`` line per setting.
Its hash (first 16 hex digits of the SHA-256 of the canonical text) is stamped
into every artifact a run writes.

A checkpoint is a single binary file::

    CONDGEST-CKPT <version>\\n
    <header byte length>\\n
    <JSON header>\\n
    <tensor bytes>

The JSON header carries the model kind, model config, run hash, seed and a
table of tensors (name, shape, byte offset). Tensors are little-endian
float32, stored in lexicographic name order. Model parameters are named
``param/<name>``; fixed buffers such as input statistics ``buffer/<name>``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .datapipe import QcThresholds, SynthConfig
from .generator import GeneratorConfig, GeneratorModel
from .losses import LossWeights
from .numcore import ModelParams
from .retrieval import RetrievalConfig, RetrievalModel, RetrievalTrainConfig
from .training import GeneratorTrainConfig

CHECKPOINT_MAGIC = "CONDGEST-CKPT"
CHECKPOINT_VERSION = 1
HASH_CHARS = 16


class ConfigError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class EvalConfig:
    candidates: int = 16


@dataclass(frozen=True)
class SplitConfig:
    ratio: float = 0.7


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    synth: SynthConfig = field(default_factory=SynthConfig)
    qc: QcThresholds = field(default_factory=QcThresholds)
    split: SplitConfig = field(default_factory=SplitConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    generator_train: GeneratorTrainConfig = field(default_factory=GeneratorTrainConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    retrieval_train: RetrievalTrainConfig = field(default_factory=RetrievalTrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    SECTIONS = ("synth", "qc", "split", "generator", "generator_train", "loss",
                "retrieval", "retrieval_train", "eval")

    # ---------------------------------------------------------------- text form

    def to_text(self) -> str:
        lines = [f"seed = {self.seed}"]
        for sec in self.SECTIONS:
            obj = getattr(self, sec)
            for f in dataclasses.fields(obj):
                lines.append(f"{sec}.{f.name} = {_format_value(getattr(obj, f.name))}")
        return "\n".join(lines) + "\n"

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()[:HASH_CHARS]

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def from_text(cls, text: str, base: "RunConfig | None" = None) -> "RunConfig":
        """Parse ``key = value`` lines on top of ``base`` (defaults if omitted).

        Blank lines and ``#`` comments are ignored; unknown keys are errors.
        """
        cfg = base or cls()
        updates: dict[str, dict[str, Any]] = {}
        seed = cfg.seed
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {n}: expected 'key = value', got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key == "seed":
                seed = _parse_value(value, 0, key)
                continue
            sec, _, name = key.partition(".")
            if sec not in cls.SECTIONS or not name:
                raise ConfigError(f"line {n}: unknown key {key!r}")
            obj = getattr(cfg, sec)
            names = {f.name for f in dataclasses.fields(obj)}
            if name not in names:
                raise ConfigError(f"line {n}: unknown key {key!r}")
            updates.setdefault(sec, {})[name] = _parse_value(value, getattr(obj, name), key)
        try:
            sections = {sec: dataclasses.replace(getattr(cfg, sec), **kv) for sec, kv in updates.items()}
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return dataclasses.replace(cfg, seed=seed, **sections)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        return cls.from_text(text)

    def with_overrides(self, **kwargs) -> "RunConfig":
        return dataclasses.replace(self, **kwargs)


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ", ".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


# tuple settings that are pairs rather than lists of levels
_FIXED_LENGTH = {"betas"}


def _parse_value(text: str, like, key: str):
    try:
        if isinstance(like, bool):
            if text.lower() not in ("true", "false"):
                raise ValueError(text)
            return text.lower() == "true"
        if isinstance(like, int):
            return int(text)
        if isinstance(like, float):
            return float(text)
        if isinstance(like, tuple):
            items = [s.strip() for s in text.split(",")]
            if key.rsplit(".", 1)[-1] in _FIXED_LENGTH and len(items) != len(like):
                raise ValueError(f"expected {len(like)} comma-separated values")
            if not items or not like:
                raise ValueError("expected at least one value")
            return tuple(_parse_value(s, like[0], key) for s in items)
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r} ({exc})") from exc


# ---------------------------------------------------------------- checkpoints


def _atomic_write(path: Path, chunks) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            for c in chunks:
                fh.write(c)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def write_checkpoint(path: str | Path, kind: str, config: dict, tensors: dict[str, np.ndarray],
                     run_hash: str = "", seed: int = 0, meta: dict | None = None) -> None:
    names = sorted(tensors)
    table, blobs, offset = [], [], 0
    for name in names:
        a = np.ascontiguousarray(np.asarray(tensors[name], dtype="<f4"))
        blob = a.tobytes()
        table.append({"name": name, "shape": list(a.shape), "offset": offset})
        blobs.append(blob)
        offset += len(blob)
    header = {
        "format": CHECKPOINT_MAGIC,
        "version": CHECKPOINT_VERSION,
        "kind": kind,
        "config": config,
        "config_hash": run_hash,
        "seed": seed,
        "meta": meta or {},
        "tensors": table,
    }
    text = json.dumps(header, sort_keys=True).encode("utf-8")
    head = f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n{len(text)}\n".encode("ascii") + text + b"\n"
    _atomic_write(Path(path), [head, *blobs])


def read_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc.strerror}") from exc
    try:
        first, rest = raw.split(b"\n", 1)
        magic, version = first.decode("ascii").split(" ")
        length_line, rest = rest.split(b"\n", 1)
        n = int(length_line)
        header = json.loads(rest[:n].decode("utf-8"))
        body = rest[n + 1 :]
    except (ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path} is not a checkpoint file") from exc
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file")
    if int(version) != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    tensors = {}
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        start = entry["offset"]
        if start + 4 * count > len(body):
            raise CheckpointError(f"{path}: tensor {entry['name']!r} runs past the end of the file")
        tensors[entry["name"]] = np.frombuffer(body, dtype="<f4", count=count, offset=start).reshape(
            entry["shape"]).astype(np.float32)
    return header, tensors


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _params(tensors: dict[str, np.ndarray]) -> ModelParams:
    return ModelParams({k[len("param/"):]: v for k, v in tensors.items() if k.startswith("param/")})


def _config_from(cls, data: dict):
    known = {f.name for f in dataclasses.fields(cls)}
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items() if k in known}
    return cls(**kw)


_GENERATOR_BUFFERS = ("music_mean", "music_std", "pose_mean", "pose_std")


def save_generator(path: str | Path, model: GeneratorModel, run_hash: str = "", seed: int = 0,
                   meta: dict | None = None) -> None:
    tensors = {f"param/{k}": v for k, v in model.params.items()}
    tensors["buffer/music_mean"] = model.music_mean
    tensors["buffer/music_std"] = model.music_std
    tensors["buffer/pose_mean"] = model.pose_mean
    tensors["buffer/pose_std"] = model.pose_std
    write_checkpoint(path, "generator", model.config.to_dict(), tensors, run_hash, seed, meta)


def load_generator(path: str | Path) -> tuple[GeneratorModel, dict]:
    header, tensors = read_checkpoint(path)
    if header["kind"] != "generator":
        raise CheckpointError(f"{path} holds a {header['kind']} model, expected a generator")
    config = _config_from(GeneratorConfig, header["config"])
    try:
        model = GeneratorModel(config, _params(tensors), *(tensors[f"buffer/{k}"] for k in _GENERATOR_BUFFERS))
    except KeyError as exc:
        raise CheckpointError(f"{path}: missing tensor {exc}") from None
    return model, header


def save_retrieval(path: str | Path, model: RetrievalModel, run_hash: str = "", seed: int = 0,
                   meta: dict | None = None) -> None:
    tensors = {f"param/{k}": v for k, v in model.params.items()}
    for name, (mean, std) in model.stats.items():
        tensors[f"buffer/{name}/mean"] = mean
        tensors[f"buffer/{name}/std"] = std
    write_checkpoint(path, "retrieval", model.config.to_dict(), tensors, run_hash, seed, meta)


def load_retrieval(path: str | Path) -> tuple[RetrievalModel, dict]:
    header, tensors = read_checkpoint(path)
    if header["kind"] != "retrieval":
        raise CheckpointError(f"{path} holds a {header['kind']} model, expected a retrieval model")
    config = _config_from(RetrievalConfig, header["config"])
    stats = {}
    for k in tensors:
        if k.startswith("buffer/") and k.endswith("/mean"):
            name = k[len("buffer/") : -len("/mean")]
            stats[name] = (tensors[k], tensors[f"buffer/{name}/std"])
    return RetrievalModel(config, _params(tensors), stats), header


def write_curve(path: str | Path, curve, run_hash: str = "") -> None:
    """Two-column (epoch, loss) text file with a leading hash comment."""
    lines = [f"# config_hash = {run_hash}"] + [f"{e} {loss!r}" for e, loss in curve]
    _atomic_write(Path(path), [("\n".join(lines) + "\n").encode("utf-8")])


def read_curve(path: str | Path) -> list[tuple[int, float]]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line and not line.startswith("#"):
            e, loss = line.split()
            out.append((int(e), float(loss)))
    return out
