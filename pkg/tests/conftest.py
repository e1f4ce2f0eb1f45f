"""Shared fixtures: one seeded 64-clip pipeline run reused by the slow tests."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import pytest

from condgest.artifacts import RunConfig, load_retrieval
from condgest.datapipe import ClipPair, load_dataset
from condgest.pipeline import TrainSummary, split, synth, train_generator_step, train_retrieval_step

# criterion number -> (passed, detail), printed after the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if passed else 'FAIL'}  {detail}")


@dataclass
class PipelineRun:
    cfg: RunConfig
    root: Path
    data: Path
    retrieval: TrainSummary
    generator: TrainSummary
    train_clips: list[ClipPair]
    test_clips: list[ClipPair]
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def retrieval_model(self):
        return load_retrieval(self.retrieval.checkpoint)[0]


@pytest.fixture(scope="session")
def pipeline_run(tmp_path_factory) -> PipelineRun:
    """synth 64 clips (seed 7), split 7:3, train retrieval then the generator with default settings."""
    root = tmp_path_factory.mktemp("e2e")
    cfg = RunConfig(seed=7)
    data, run = root / "data", root / "run"
    timings = {}
    t0 = time.perf_counter()
    synth(cfg, 64, data)
    split(cfg, data)
    timings["data"] = time.perf_counter() - t0
    t1 = time.perf_counter()
    ret = train_retrieval_step(cfg, data, run)
    timings["retrieval"] = time.perf_counter() - t1
    t2 = time.perf_counter()
    gen = train_generator_step(cfg, data, run, ret.checkpoint)
    timings["generator"] = time.perf_counter() - t2
    return PipelineRun(cfg, root, data, ret, gen, load_dataset(data / "train.txt"),
                       sorted(load_dataset(data / "test.txt"), key=lambda c: c.id), timings)
