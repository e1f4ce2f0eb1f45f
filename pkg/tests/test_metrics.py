import numpy as np
import pytest

from condgest.metrics import (
    EmbeddingSet,
    MetricError,
    MetricReport,
    diversity,
    evaluate_embeddings,
    fid,
    m_dist,
    mm_dist,
)


def gaussian_fid(mu1, a, mu2, b):
    return float(np.sum((mu1 - mu2) ** 2) + np.sum((np.sqrt(a) - np.sqrt(b)) ** 2))


def test_fid_self_is_zero():
    A = np.random.default_rng(0).normal(size=(200, 8))
    assert fid(A, A) <= 1e-8


def test_fid_one_dimensional_shift():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(100_000, 1))
    b = rng.normal(loc=1.0, size=(100_000, 1))
    assert fid(a, b) == pytest.approx(1.0, abs=0.05)


def test_fid_diagonal_closed_form():
    a, b = np.array([1.0, 4.0, 0.25]), np.array([4.0, 1.0, 1.0])
    rng = np.random.default_rng(2)
    A = rng.normal(size=(100_000, 3)) * np.sqrt(a)
    B = rng.normal(size=(100_000, 3)) * np.sqrt(b)
    expected = gaussian_fid(0, a, 0, b)
    assert fid(A, B) == pytest.approx(expected, rel=0.05)


def test_fid_symmetric():
    rng = np.random.default_rng(3)
    A, B = rng.normal(size=(50, 6)), 2 * rng.normal(size=(70, 6)) + 1
    assert abs(fid(A, B) - fid(B, A)) < 1e-6


def test_fid_errors():
    with pytest.raises(MetricError):
        fid(np.zeros((1, 3)), np.zeros((5, 3)))
    with pytest.raises(MetricError):
        fid(np.zeros((4, 3)), np.zeros((4, 2)))
    with pytest.raises(MetricError, match="non-finite"):
        fid(np.array([[0.0, np.nan], [1, 1]]), np.zeros((4, 2)))


def test_m_dist_examples():
    rng = np.random.default_rng(4)
    gt = rng.normal(size=(10, 5))
    assert m_dist(gt, gt) == 0.0
    dirs = rng.normal(size=(10, 5))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    assert m_dist(gt + dirs, gt) == pytest.approx(1.0)
    assert m_dist(gt + 1.0, gt) == pytest.approx(np.sqrt(5))


def test_mm_dist_examples():
    music = np.random.default_rng(5).normal(size=(6, 4))
    assert mm_dist(music, music) == 0.0
    assert mm_dist(music + np.eye(4)[0], music) == pytest.approx(1.0)
    assert mm_dist(music + 1.0, music) == pytest.approx(2.0)


def test_unpaired_rejected():
    with pytest.raises(MetricError):
        m_dist(np.zeros((3, 2)), np.zeros((4, 2)))
    a = EmbeddingSet(np.zeros((2, 2)), "generated", ("x", "y"))
    b = EmbeddingSet(np.zeros((2, 2)), "real", ("x", "z"))
    with pytest.raises(MetricError, match="paired"):
        m_dist(a, b)


def test_diversity_examples():
    assert diversity(np.ones((5, 3))) == 0.0
    assert diversity(np.array([[0.0, 0.0], [3.0, 4.0]])) == pytest.approx(5.0)
    assert diversity(np.array([[0.0], [1.0], [2.0]])) == pytest.approx(4 / 3)
    with pytest.raises(MetricError):
        diversity(np.zeros((1, 3)))


def test_diversity_subsample_is_seeded():
    v = np.random.default_rng(6).normal(size=(60, 3))
    assert diversity(v, cap=20, seed=1) == diversity(v, cap=20, seed=1)
    assert diversity(v, cap=20) == pytest.approx(diversity(v), rel=0.2)


@pytest.mark.parametrize("seed", range(3))
def test_metrics_rotation_invariant(seed):
    rng = np.random.default_rng(seed)
    gen, real, music = (rng.normal(size=(30, 8)) for _ in range(3))
    Q = np.linalg.qr(rng.normal(size=(8, 8)))[0]
    before = evaluate_embeddings(EmbeddingSet(gen), EmbeddingSet(real, "real"), EmbeddingSet(music, "music"))
    after = evaluate_embeddings(EmbeddingSet(gen @ Q), EmbeddingSet(real @ Q, "real"),
                                EmbeddingSet(music @ Q, "music"))
    for name in ("fid", "m_dist", "mm_dist", "div"):
        assert abs(getattr(before, name) - getattr(after, name)) < 1e-6


def test_embedding_set_validation():
    with pytest.raises(MetricError):
        EmbeddingSet(np.zeros((2, 2)), "other")
    with pytest.raises(MetricError):
        EmbeddingSet(np.zeros((2, 2)), ids=("a",))


def test_report_round_trip(tmp_path):
    rep = MetricReport(0.125, 0.5, 1.25, 0.75, 10, 10, "abc123", {"seed": "7"})
    rep.save(tmp_path / "r.txt")
    back = MetricReport.load(tmp_path / "r.txt")
    assert back == rep
    assert "FID" in rep.table() and "0.1250" in rep.table()
