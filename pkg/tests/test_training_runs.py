"""Training behaviour on the shared 64-clip synthetic run."""

import numpy as np
import pytest

from condgest.datapipe import ClipPair
from condgest.generator import GeneratorConfig
from condgest.losses import LossWeights
from condgest.retrieval import eval_loss, retrieval_accuracy, train_retrieval
from condgest.training import GeneratorTrainConfig, train_generator

pytestmark = pytest.mark.slow


def test_retrieval_loss_halves(pipeline_run):
    curve = pipeline_run.retrieval.curve
    assert len(curve) == 31
    assert curve[-1][1] < 0.5 * curve[0][1]


def test_toy_generator_reconstruction_halves(pipeline_run):
    toy = GeneratorConfig(layers=1, heads=2, d_model=16)
    res = train_generator(pipeline_run.train_clips, toy, GeneratorTrainConfig(epochs=50),
                          LossWeights(lambda_align=0.0), seed=0)
    assert res.curve[-1][1] < 0.5 * res.curve[0][1]


def test_shuffled_pairs_carry_no_signal(pipeline_run):
    """Train on gestures permuted across clips, then probe the true held-out pairs."""
    train = pipeline_run.train_clips
    perm = np.random.default_rng(0).permutation(len(train))
    shuffled = [ClipPair(c.id, c.music, train[j].gesture) for c, j in zip(train, perm)]
    cfg = pipeline_run.cfg
    res = train_retrieval(shuffled, cfg.retrieval, cfg.retrieval_train, seed=cfg.seed)
    test = pipeline_run.test_clips
    batch = 16
    music = np.stack([c.music for c in test])[:batch]
    gesture = np.stack([c.gesture for c in test])[:batch]
    heldout = eval_loss(res.model, music, gesture, batch)
    assert heldout >= 0.85 * np.log(batch)
    assert retrieval_accuracy(res.model, test, candidates=16, seed=cfg.seed) < 0.35
