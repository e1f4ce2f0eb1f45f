import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from condgest import losses
from condgest.losses import LossWeights, align_loss, rec_loss, total_loss
from condgest.numcore import ModelParams, ops, value_and_grad
from condgest.retrieval import RetrievalConfig, init_retrieval

RET = init_retrieval(RetrievalConfig(blocks=1, heads=2, hidden=16, embed_dim=8), seed=0, dtype=np.float64)


def seqs(T=6, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(T, 147)), rng.normal(size=(T, 147))


def test_weights_defaults_and_validation():
    w = LossWeights()
    assert (w.lambda_align, w.align_start_epoch) == (0.5, 50)
    assert not w.active(49) and w.active(50)
    assert not LossWeights(0.0, 0).active(10)
    for bad in (dict(lambda_align=-1.0), dict(lambda_align=np.inf), dict(align_start_epoch=-1)):
        with pytest.raises(ValueError):
            LossWeights(**bad)


def test_rec_loss_examples():
    a, _ = seqs()
    assert float(rec_loss(a, a).data) == 0.0
    b = np.zeros((1, 147))
    b[0, 40] = 2.0
    assert float(rec_loss(np.zeros((1, 147)), b).data) == 2.0
    for T in (1, 7):
        assert float(rec_loss(np.zeros((T, 147)), np.full((T, 147), 0.1)).data) == pytest.approx(14.7)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_rec_loss_symmetric_and_positive(seed):
    a, b = seqs(seed=seed)
    assert float(rec_loss(a, b).data) == float(rec_loss(b, a).data) > 0


def test_rec_loss_shape_mismatch():
    with pytest.raises(ValueError):
        rec_loss(np.zeros((3, 147)), np.zeros((4, 147)))


def test_align_loss_identity_and_range():
    a, b = seqs()
    assert abs(float(align_loss(a, a, RET).data)) < 1e-12
    for seed in range(5):
        a, b = seqs(seed=seed)
        assert 0.0 <= float(align_loss(a, b, RET).data) <= 2.0


def _mean_embedding(model, p, branch, x, rng=None, normalize=True):
    return ops.mean(x, axis=-2)


@pytest.mark.parametrize("other, expected", [([-1.0, 0.0], 2.0), ([0.0, 3.0], 1.0), ([2.0, 0.0], 0.0)])
def test_align_loss_cosine_examples(monkeypatch, other, expected):
    monkeypatch.setattr(losses, "embed_branch", _mean_embedding)
    pred = np.zeros((3, 147))
    pred[:, 0] = 1.0
    gt = np.zeros((3, 147))
    gt[:, :2] = other
    assert float(align_loss(pred, gt, RET).data) == pytest.approx(expected, abs=1e-12)


def test_align_loss_zero_embedding_rejected(monkeypatch):
    monkeypatch.setattr(losses, "embed_branch", _mean_embedding)
    pred = np.ones((3, 147))
    with pytest.raises(ValueError):
        align_loss(pred, np.zeros((3, 147)), RET)


def test_align_gradient_reaches_prediction_only():
    a, b = seqs()
    _, g = value_and_grad(lambda q: align_loss(q["pred"], q["gt"], RET), ModelParams({"pred": a, "gt": b}))
    assert np.all(g["gt"] == 0.0)
    assert np.abs(g["pred"]).max() > 0


def test_total_loss_gate():
    a, b = seqs()
    rec = float(rec_loss(a, b).data)
    w = LossWeights(0.5, 3)
    assert float(total_loss(a, b, LossWeights(0.0, 0), 10).data) == rec
    assert float(total_loss(a, b, w, 2, RET).data) == rec
    expected = rec + 0.5 * float(align_loss(a, b, RET).data)
    assert float(total_loss(a, b, w, 3, RET).data) == pytest.approx(expected, rel=1e-12)
    assert abs(float(total_loss(a, a, w, 3, RET).data)) < 1e-12
    with pytest.raises(ValueError, match="retrieval"):
        total_loss(a, b, w, 3)
