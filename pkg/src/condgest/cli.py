"""``condgest`` command-line tool.

Errors are printed to stderr as ``error: <message>`` and exit with status 1;
usage errors exit with status 2.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import __version__, pipeline
from .artifacts import CheckpointError, ConfigError, RunConfig
from .datapipe import ContainerError
from .metrics import MetricError


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="global seed (overrides the config file)")
    common.add_argument("--config", type=Path, help="key-value run config file")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="condgest", description="Music-driven conducting gesture toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic paired dataset")
    p.add_argument("--n", type=_positive_int, required=True, help="number of clips")

    p = sub.add_parser("extract", parents=[common], help="compute music descriptors from audio")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--wav", type=Path, help="a WAV file; writes a descriptor directory under --out")
    src.add_argument("--data", type=Path, help="a dataset; recompute every clip's music from its audio")

    p = sub.add_parser("validate", parents=[common], help="run quality control over a dataset")
    p.add_argument("--data", type=Path, required=True)

    p = sub.add_parser("split", parents=[common], help="write train/test index files")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--ratio", type=float, help="training fraction (default from config)")

    p = sub.add_parser("train-retrieval", parents=[common], help="train the music/gesture retrieval model")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--epochs", type=_positive_int)

    p = sub.add_parser("train-generator", parents=[common], help="train the gesture generator")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--retrieval", type=Path, help="retrieval checkpoint (required when lambda_align > 0)")
    p.add_argument("--epochs", type=_positive_int)
    p.add_argument("--lambda-align", type=float, dest="lambda_align")

    p = sub.add_parser("generate", parents=[common], help="generate gestures for a music clip")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--music", type=Path, required=True, help="WAV file or descriptor directory")
    p.add_argument("--g0", type=Path, help="clip directory whose first frame is the initial pose (default: rest pose)")

    p = sub.add_parser("evaluate", parents=[common], help="score generated gestures on the test split")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--retrieval", type=Path, required=True)
    who = p.add_mutually_exclusive_group(required=True)
    who.add_argument("--generator", type=Path, help="generator checkpoint")
    who.add_argument("--ground-truth", action="store_true", help="score real gestures against themselves")
    who.add_argument("--untrained", action="store_true", help="score a freshly initialised generator")
    return parser


def _run_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    if getattr(args, "ratio", None) is not None:
        cfg = cfg.with_overrides(split=dataclasses.replace(cfg.split, ratio=args.ratio))
    if args.command == "train-retrieval" and args.epochs:
        cfg = cfg.with_overrides(retrieval_train=dataclasses.replace(cfg.retrieval_train, epochs=args.epochs))
    if args.command == "train-generator":
        if args.epochs:
            cfg = cfg.with_overrides(generator_train=dataclasses.replace(cfg.generator_train, epochs=args.epochs))
        if args.lambda_align is not None:
            cfg = cfg.with_overrides(loss=dataclasses.replace(cfg.loss, lambda_align=args.lambda_align))
    return cfg


def _dispatch(args, cfg: RunConfig) -> None:
    out = args.out
    cmd = args.command
    if cmd == "synth":
        s = pipeline.synth(cfg, args.n, out)
        print(f"wrote {s.n_clips} clips to {s.index.parent} ({s.n_accepted} accepted by QC, "
              f"{s.n_clips - s.n_accepted} rejected)")
    elif cmd == "extract":
        if args.wav:
            d = pipeline.extract(cfg, args.wav, out)
            print(f"wrote descriptor to {d}")
        else:
            print(f"re-extracted music for {pipeline.extract_dataset(cfg, args.data)} clips")
    elif cmd == "validate":
        reports = pipeline.validate(cfg, args.data, out)
        for r in reports:
            if not r.accepted:
                print(r.summary())
        ok = sum(r.accepted for r in reports)
        print(f"{ok}/{len(reports)} clips accepted")
    elif cmd == "split":
        train, test = pipeline.split(cfg, args.data, args.out if args.out != Path(".") else None)
        print(f"wrote {train} and {test}")
    elif cmd == "train-retrieval":
        s = pipeline.train_retrieval_step(cfg, args.data, out)
        print(f"retrieval loss {s.curve[0][1]:.4f} -> {s.curve[-1][1]:.4f}; checkpoint {s.checkpoint}")
        if s.heldout_accuracy is not None:
            print(f"held-out top-1 accuracy ({cfg.eval.candidates} candidates): {s.heldout_accuracy:.3f}")
    elif cmd == "train-generator":
        s = pipeline.train_generator_step(cfg, args.data, out, args.retrieval)
        print(f"generator loss {s.curve[0][1]:.4f} -> {s.curve[-1][1]:.4f}; checkpoint {s.checkpoint}")
    elif cmd == "generate":
        d, T = pipeline.generate(cfg, args.checkpoint, args.music, out, args.g0)
        print(f"wrote {T} frames ({T / 30:.2f} s) to {d}")
    elif cmd == "evaluate":
        report = pipeline.evaluate(cfg, args.data, args.retrieval, out, args.generator,
                                   args.ground_truth, args.untrained)
        print(report.table(report.extra["source"]))


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _run_config(args)
        _dispatch(args, cfg)
    except (ConfigError, CheckpointError, ContainerError, MetricError, pipeline.PipelineError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
