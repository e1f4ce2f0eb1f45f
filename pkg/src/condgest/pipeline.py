"""End-to-end steps behind the command-line tool: data, training, generation, evaluation.

Every function takes a :class:`RunConfig` and writes its artifacts under an
output directory, stamping them with the config hash and seed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import audiofeat
from .artifacts import (
    RunConfig,
    load_generator,
    load_retrieval,
    save_generator,
    save_retrieval,
    write_curve,
)
from .datapipe import (
    ClipPair,
    load_clip,
    load_dataset,
    load_descriptor,
    read_index,
    save_clip,
    split_dataset,
    synth_clip,
    validate_clip,
    write_index,
)
from .datapipe.clip import INDEX_FILE, save_descriptor, save_gesture
from .generator import GeneratorModel, generate_sequence
from .metrics import EmbeddingSet, MetricReport, evaluate_embeddings
from .pose import rest_pose
from .retrieval import RetrievalModel, embed_gesture, embed_music, retrieval_accuracy, train_retrieval
from .training import initial_pose, train_generator, untrained_generator

log = logging.getLogger(__name__)

TRAIN_INDEX = "train.txt"
TEST_INDEX = "test.txt"
AUDIO_FILE = "audio.wav"


class PipelineError(RuntimeError):
    """A step could not run with the given inputs; the message says why."""


def _stamp(cfg: RunConfig) -> dict[str, str]:
    return {"config_hash": cfg.hash, "seed": str(cfg.seed)}


# ---------------------------------------------------------------- data


@dataclass
class SynthSummary:
    n_clips: int
    n_accepted: int
    index: Path


def synth(cfg: RunConfig, n: int, out: Path) -> SynthSummary:
    """Write ``n`` synthetic clips, each with its audio, and an index.

    Music descriptors are extracted from the PCM16 file as written, so
    re-running ``extract`` on the audio reproduces them exactly.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    out = Path(out)
    clips_dir = out / "clips"
    paths, accepted = [], 0
    for i in range(n):
        s = synth_clip(i, cfg.seed, cfg.synth)
        d = clips_dir / s.clip.id
        d.mkdir(parents=True, exist_ok=True)
        audiofeat.write_wav(d / AUDIO_FILE, s.audio)
        music = audiofeat.extract_descriptor(audiofeat.read_wav(d / AUDIO_FILE)).frames
        T = min(len(music), s.clip.T)
        clip = ClipPair(s.clip.id, music[:T], s.clip.gesture[:T], meta=s.clip.meta)
        save_clip(clip, d, _stamp(cfg))
        accepted += validate_clip(clip, cfg.qc).accepted
        paths.append(d)
    index = write_index(paths, out / INDEX_FILE, _stamp(cfg))
    return SynthSummary(n, accepted, index)


def extract(cfg: RunConfig, wav: Path, out: Path, clip_id: str | None = None) -> Path:
    clip = audiofeat.read_wav(wav)
    desc = audiofeat.extract_descriptor(clip)
    return save_descriptor(desc.frames, out, clip_id or Path(wav).stem, _stamp(cfg))


def extract_dataset(cfg: RunConfig, data: Path) -> int:
    """Recompute every clip's music from its stored audio file; returns the clip count."""
    n = 0
    for d in read_index(data):
        if not (d / AUDIO_FILE).is_file():
            raise PipelineError(f"{d} has no {AUDIO_FILE} to extract from")
        clip = load_clip(d)
        music = audiofeat.extract_descriptor(audiofeat.read_wav(d / AUDIO_FILE)).frames
        if len(music) < clip.T:
            raise PipelineError(f"{d}: audio yields {len(music)} frames but the clip has {clip.T}")
        save_clip(ClipPair(clip.id, music[: clip.T], clip.gesture, meta=clip.meta), d, _stamp(cfg))
        n += 1
    return n


def validate(cfg: RunConfig, data: Path, out: Path | None = None) -> list:
    reports = [validate_clip(load_clip(d), cfg.qc) for d in read_index(data)]
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        lines = [f"# config_hash = {cfg.hash}"] + [r.summary() for r in reports]
        (Path(out) / "qc.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return reports


def split(cfg: RunConfig, data: Path, out: Path | None = None) -> tuple[Path, Path]:
    data = Path(data)
    dirs = read_index(data)
    by_id = {load_clip(d).id: d for d in dirs}
    train_ids, test_ids = split_dataset(list(by_id), cfg.split.ratio, cfg.seed)
    base = Path(out) if out is not None else (data if data.is_dir() else data.parent)
    stamp = _stamp(cfg) | {"ratio": repr(cfg.split.ratio)}
    return (
        write_index([by_id[i] for i in train_ids], base / TRAIN_INDEX, stamp),
        write_index([by_id[i] for i in test_ids], base / TEST_INDEX, stamp),
    )


def _subset(data: Path, name: str) -> list[ClipPair]:
    """Clips listed in ``name`` next to the dataset index, or the whole dataset if absent."""
    data = Path(data)
    if data.is_file():
        return load_dataset(data)
    if (data / name).is_file():
        return load_dataset(data / name)
    return load_dataset(data)


def _accepted(clips: list[ClipPair], cfg: RunConfig) -> list[ClipPair]:
    kept = [c for c in clips if validate_clip(c, cfg.qc).accepted]
    if len(kept) < len(clips):
        log.warning("dropped %d clips rejected by quality control", len(clips) - len(kept))
    return kept


# ---------------------------------------------------------------- training


@dataclass
class TrainSummary:
    checkpoint: Path
    curve_file: Path
    curve: list[tuple[int, float]]
    heldout_accuracy: float | None = None


def train_retrieval_step(cfg: RunConfig, data: Path, out: Path) -> TrainSummary:
    clips = _accepted(_subset(data, TRAIN_INDEX), cfg)
    if len(clips) < 2:
        raise PipelineError("retrieval training needs at least 2 accepted clips")
    res = train_retrieval(clips, cfg.retrieval, cfg.retrieval_train, cfg.seed)
    out = Path(out)
    ckpt, curve = out / "retrieval.ckpt", out / "retrieval_curve.txt"
    save_retrieval(ckpt, res.model, cfg.hash, cfg.seed)
    write_curve(curve, res.curve, cfg.hash)
    acc = None
    if Path(data).is_dir() and (Path(data) / TEST_INDEX).is_file():
        test = load_dataset(Path(data) / TEST_INDEX)
        if len(test) >= 2:
            acc = retrieval_accuracy(res.model, test, cfg.eval.candidates, cfg.seed)
    return TrainSummary(ckpt, curve, res.curve, acc)


def train_generator_step(cfg: RunConfig, data: Path, out: Path, retrieval_ckpt: Path | None) -> TrainSummary:
    if cfg.loss.lambda_align > 0 and retrieval_ckpt is None:
        raise PipelineError(
            f"loss.lambda_align = {cfg.loss.lambda_align} needs --retrieval CHECKPOINT: the alignment "
            "term is only meaningful once a retrieval model has been trained to a stable embedding; "
            "train one first (train-retrieval) or set loss.lambda_align = 0"
        )
    retrieval = load_retrieval(retrieval_ckpt)[0] if retrieval_ckpt is not None else None
    clips = _accepted(_subset(data, TRAIN_INDEX), cfg)
    if not clips:
        raise PipelineError("no accepted training clips")
    res = train_generator(clips, cfg.generator, cfg.generator_train, cfg.loss, retrieval, cfg.seed)
    out = Path(out)
    ckpt, curve = out / "generator.ckpt", out / "generator_curve.txt"
    save_generator(ckpt, res.model, cfg.hash, cfg.seed)
    write_curve(curve, res.curve, cfg.hash)
    return TrainSummary(ckpt, curve, res.curve)


# ---------------------------------------------------------------- generation and evaluation


def _music_from(source: Path) -> np.ndarray:
    source = Path(source)
    if source.suffix.lower() == ".wav":
        return audiofeat.extract_descriptor(audiofeat.read_wav(source)).frames
    return load_descriptor(source)


def _check_music(model: GeneratorModel, music: np.ndarray) -> None:
    if music.ndim != 2 or music.shape[1] != model.config.music_dim:
        raise PipelineError(
            f"descriptor width {music.shape[-1]} does not match the checkpoint's music_dim "
            f"{model.config.music_dim}"
        )
    if len(music) > model.config.max_T:
        raise PipelineError(f"{len(music)} frames exceed the model's max_T {model.config.max_T}")


def generate(cfg: RunConfig, checkpoint: Path, music_source: Path, out: Path,
             g0_source: Path | None = None) -> tuple[Path, int]:
    model, header = load_generator(checkpoint)
    music = _music_from(music_source)
    _check_music(model, music)
    g0 = rest_pose() if g0_source is None else initial_pose(load_clip(g0_source).gesture)
    gesture = generate_sequence(model, music, g0)
    meta = _stamp(cfg) | {"checkpoint_hash": header.get("config_hash", "")}
    return save_gesture(gesture, out, Path(music_source).stem, meta), len(gesture)


def generate_for(model: GeneratorModel, clips: list[ClipPair]) -> np.ndarray:
    """Generated gestures for a batch of equal-length clips, each started from its own first frame."""
    music = np.stack([c.music for c in clips])
    g0 = np.stack([initial_pose(c.gesture) for c in clips])
    return generate_sequence(model, music, g0)


def evaluation_report(generated: np.ndarray | None, clips: list[ClipPair], retrieval: RetrievalModel,
                      cfg: RunConfig) -> MetricReport:
    """Metrics of ``generated`` against the real clips; ``None`` scores ground truth against itself."""
    if len(clips) < 2:
        raise PipelineError("evaluation needs at least 2 test clips")
    clips = sorted(clips, key=lambda c: c.id)
    ids = tuple(c.id for c in clips)
    real_g = np.stack([c.gesture for c in clips])
    gen_g = real_g if generated is None else np.asarray(generated)
    real = EmbeddingSet(embed_gesture(retrieval, real_g), "real", ids)
    gen = EmbeddingSet(embed_gesture(retrieval, gen_g), "generated", ids)
    music = EmbeddingSet(embed_music(retrieval, np.stack([c.music for c in clips])), "music", ids)
    if gen.dim != music.dim:
        raise PipelineError(f"embedding dims differ: gesture {gen.dim}, music {music.dim}")
    return evaluate_embeddings(gen, real, music, cfg.hash, cfg.seed)


def evaluate(cfg: RunConfig, data: Path, retrieval_ckpt: Path, out: Path,
             generator_ckpt: Path | None = None, ground_truth: bool = False,
             untrained: bool = False) -> MetricReport:
    """Score a generator (or the ground truth, or an untrained model) on the test split."""
    retrieval, _ = load_retrieval(retrieval_ckpt)
    clips = sorted(_subset(data, TEST_INDEX), key=lambda c: c.id)
    if ground_truth:
        generated, label = None, "ground-truth"
    else:
        if untrained:
            model, label = untrained_generator(_subset(data, TRAIN_INDEX), cfg.generator, cfg.seed), "untrained"
        elif generator_ckpt is not None:
            model, label = load_generator(generator_ckpt)[0], "generator"
        else:
            raise PipelineError("evaluate needs --generator CHECKPOINT, --untrained or --ground-truth")
        for c in clips:
            _check_music(model, c.music)
        if model.config.pose_dim != retrieval.config.pose_dim:
            raise PipelineError("generator and retrieval pose dimensions differ")
        generated = generate_for(model, clips)
    report = evaluation_report(generated, clips, retrieval, cfg)
    report.extra["source"] = label
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report.save(out / "report.txt")
    return report
