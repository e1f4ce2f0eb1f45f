import numpy as np
import pytest

from condgest.artifacts import load_generator
from condgest.audiofeat import AudioClip, extract_descriptor, read_wav, write_wav
from condgest.cli import main
from condgest.datapipe import load_clip, read_index
from condgest.datapipe.clip import load_gesture, save_descriptor
from condgest.generator import generate_sequence
from condgest.metrics import MetricReport
from condgest.pose import rest_pose

SMALL = """\
synth.seconds = 2.0
retrieval.blocks = 1
retrieval.heads = 2
retrieval.hidden = 16
retrieval.embed_dim = 16
retrieval_train.epochs = 2
retrieval_train.batch_size = 4
retrieval_train.crop_frames = 0
generator.layers = 1
generator.heads = 2
generator.d_model = 16
generator_train.epochs = 2
generator_train.crop_frames = 0
loss.align_start_epoch = 1
"""


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def small_cfg(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "small.cfg"
    path.write_text(SMALL)
    return path


@pytest.fixture(scope="module")
def dataset(tmp_path_factory, small_cfg):
    out = tmp_path_factory.mktemp("data")
    assert main(["synth", "--n", "8", "--seed", "3", "--config", str(small_cfg), "--out", str(out)]) == 0
    assert main(["split", "--data", str(out), "--seed", "3", "--config", str(small_cfg)]) == 0
    return out


@pytest.fixture(scope="module")
def retrieval_ckpt(tmp_path_factory, small_cfg, dataset):
    out = tmp_path_factory.mktemp("ret")
    assert main(["train-retrieval", "--data", str(dataset), "--seed", "3", "--config", str(small_cfg),
                 "--out", str(out)]) == 0
    return out / "retrieval.ckpt"


def test_synth_zero_is_usage_error(capsys, tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["synth", "--n", "0", "--out", str(tmp_path)])
    assert info.value.code == 2
    assert "must be >= 1" in capsys.readouterr().err


def test_synth_writes_accepted_clips_and_is_repeatable(capsys, tmp_path, small_cfg, dataset):
    code, out, _ = run(capsys, "synth", "--n", 8, "--seed", 3, "--config", small_cfg, "--out", tmp_path)
    assert code == 0 and "8 accepted" in out
    a = sorted(p for p in dataset.rglob("*") if p.is_file() and p.parent.name.startswith("clip_"))
    b = sorted(p for p in tmp_path.rglob("*") if p.is_file() and p.parent.name.startswith("clip_"))
    assert [p.relative_to(dataset) for p in a] == [p.relative_to(tmp_path) for p in b]
    assert all(x.read_bytes() == y.read_bytes() for x, y in zip(a, b))
    assert (dataset / "index.txt").read_bytes() == (tmp_path / "index.txt").read_bytes()
    assert load_clip(read_index(dataset)[0]).T == 60


def test_split_writes_seven_to_three(dataset):
    assert len(read_index(dataset / "train.txt")) == 6
    assert len(read_index(dataset / "test.txt")) == 2


def test_validate_reports_all_accepted(capsys, dataset, tmp_path):
    code, out, _ = run(capsys, "validate", "--data", dataset, "--out", tmp_path)
    assert code == 0 and "8/8 clips accepted" in out
    assert (tmp_path / "qc.txt").is_file()


def test_extract_dataset_reproduces_music(capsys, tmp_path, small_cfg, dataset):
    run(capsys, "synth", "--n", 2, "--seed", 3, "--config", small_cfg, "--out", tmp_path)
    before = [load_clip(d).music for d in read_index(tmp_path)]
    code, out, _ = run(capsys, "extract", "--data", tmp_path, "--seed", 3, "--config", small_cfg)
    assert code == 0 and "2 clips" in out
    for d, m in zip(read_index(tmp_path), before):
        assert load_clip(d).music.tobytes() == m.tobytes()


def test_generator_with_alignment_needs_retrieval(capsys, tmp_path, dataset):
    code, _, err = run(capsys, "train-generator", "--data", dataset, "--out", tmp_path)
    assert code == 1
    assert err.startswith("error: ") and "--retrieval" in err and "train-retrieval" in err


def test_train_and_evaluate(capsys, tmp_path, small_cfg, dataset, retrieval_ckpt):
    code, out, _ = run(capsys, "train-generator", "--data", dataset, "--retrieval", retrieval_ckpt,
                       "--seed", 3, "--config", small_cfg, "--out", tmp_path / "a")
    assert code == 0 and "generator loss" in out
    run(capsys, "train-generator", "--data", dataset, "--retrieval", retrieval_ckpt,
        "--seed", 3, "--config", small_cfg, "--out", tmp_path / "b")
    assert (tmp_path / "a" / "generator.ckpt").read_bytes() == (tmp_path / "b" / "generator.ckpt").read_bytes()
    assert (tmp_path / "a" / "generator_curve.txt").read_text().startswith("# config_hash = ")

    code, out, _ = run(capsys, "evaluate", "--data", dataset, "--retrieval", retrieval_ckpt,
                       "--generator", tmp_path / "a" / "generator.ckpt", "--seed", 3, "--config", small_cfg,
                       "--out", tmp_path / "eval")
    assert code == 0 and "FID" in out
    report = MetricReport.load(tmp_path / "eval" / "report.txt")
    assert report.n_generated == 2 and report.extra["source"] == "generator"


def test_ground_truth_row(capsys, tmp_path, small_cfg, dataset, retrieval_ckpt):
    code, _, _ = run(capsys, "evaluate", "--data", dataset, "--retrieval", retrieval_ckpt, "--ground-truth",
                     "--seed", 3, "--config", small_cfg, "--out", tmp_path)
    assert code == 0
    r = MetricReport.load(tmp_path / "report.txt")
    assert r.fid < 1e-6 and r.m_dist < 1e-6 and r.mm_dist > 0 and r.div > 0


def test_generate_from_wav_defaults_to_rest_pose(capsys, tmp_path, small_cfg, dataset):
    run(capsys, "train-generator", "--data", dataset, "--lambda-align", 0, "--epochs", 1,
        "--config", small_cfg, "--out", tmp_path)
    t = np.arange(10 * 22050) / 22050
    write_wav(tmp_path / "tune.wav", AudioClip(0.3 * np.sin(2 * np.pi * 330 * t)))
    code, out, _ = run(capsys, "generate", "--checkpoint", tmp_path / "generator.ckpt",
                       "--music", tmp_path / "tune.wav", "--out", tmp_path / "gen")
    assert code == 0 and "300 frames (10.00 s)" in out
    g = load_gesture(tmp_path / "gen")
    assert g.shape == (300, 147)
    code, _, _ = run(capsys, "generate", "--checkpoint", tmp_path / "generator.ckpt",
                     "--music", tmp_path / "tune.wav", "--out", tmp_path / "gen2")
    assert load_gesture(tmp_path / "gen2").tobytes() == g.tobytes()

    model, _ = load_generator(tmp_path / "generator.ckpt")
    music = extract_descriptor(read_wav(tmp_path / "tune.wav")).frames
    np.testing.assert_array_equal(g, generate_sequence(model, music, rest_pose()).astype(np.float32))


def test_generate_rejects_wrong_descriptor_width(capsys, tmp_path, small_cfg, dataset):
    run(capsys, "train-generator", "--data", dataset, "--lambda-align", 0, "--epochs", 1,
        "--config", small_cfg, "--out", tmp_path)
    save_descriptor(np.zeros((30, 200), dtype=np.float32), tmp_path / "narrow", "narrow")
    code, _, err = run(capsys, "generate", "--checkpoint", tmp_path / "generator.ckpt",
                       "--music", tmp_path / "narrow", "--out", tmp_path / "gen")
    assert code == 1 and err.startswith("error: ") and "music_dim" in err


@pytest.mark.parametrize("argv, needle", [
    (["split", "--data", "{tmp}/nowhere"], "error: "),
    (["generate", "--checkpoint", "{tmp}/none.ckpt", "--music", "{tmp}/x.wav"], "cannot read checkpoint"),
    (["synth", "--n", "1", "--config", "{tmp}/none.cfg"], "cannot read config"),
])
def test_errors_are_prefixed(capsys, tmp_path, argv, needle):
    code, _, err = run(capsys, *[a.format(tmp=tmp_path) for a in argv])
    assert code == 1 and err.startswith("error: ") and needle in err


def test_bad_config_key(capsys, tmp_path):
    (tmp_path / "bad.cfg").write_text("generator.depth = 3\n")
    code, _, err = run(capsys, "synth", "--n", 1, "--config", tmp_path / "bad.cfg", "--out", tmp_path)
    assert code == 1 and "unknown key" in err


def test_unwritable_output(capsys, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = run(capsys, "synth", "--n", 1, "--out", blocker / "sub")
    assert code == 1 and err.startswith("error: ")
