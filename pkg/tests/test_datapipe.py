import dataclasses
import logging

import numpy as np
import pytest
from scipy.signal import find_peaks

from condgest.datapipe import (
    ClipPair,
    ContainerError,
    QcThresholds,
    SynthConfig,
    load_clip,
    load_dataset,
    read_index,
    read_index_header,
    save_clip,
    split_dataset,
    synth_clip,
    synth_dataset,
    validate_clip,
    window_clips,
    write_index,
)
from condgest.datapipe.synth import beat_times
from condgest.pose import JOINT_INDEX, geodesic_angle, rest_pose, sixd_to_rotmat, unpack_pose


def still_clip(T, seed=0, cid="c"):
    """Rest pose with a slow root drift; valid and never frozen."""
    g = np.tile(rest_pose(np.float64), (T, 1))
    g[:, 0] = 0.01 * np.sin(np.arange(T) / 5.0)
    music = np.random.default_rng(seed).normal(size=(T, 438))
    return ClipPair(cid, music, g)


@pytest.fixture(scope="module")
def synth_clips():
    return synth_dataset(6, seed=11)


# ---------------------------------------------------------------- container


def test_clip_round_trip_bit_exact(tmp_path, synth_clips):
    clip = synth_clips[0]
    back = load_clip(save_clip(clip, tmp_path / clip.id))
    assert back.id == clip.id and back.meta == clip.meta and back.layout == clip.layout
    assert back.music.tobytes() == clip.music.tobytes()
    assert back.gesture.tobytes() == clip.gesture.tobytes()


def test_container_files_are_little_endian_float32(tmp_path):
    clip = still_clip(5)
    d = save_clip(clip, tmp_path / "x")
    raw = np.frombuffer((d / "gesture.f32").read_bytes(), dtype="<f4").reshape(5, 147)
    np.testing.assert_array_equal(raw, clip.gesture)
    meta = (d / "clip.meta").read_text()
    assert "layout = mfcc:20,mfcc_delta:20,chroma:12,tempogram:384,onset:1,rms:1" in meta
    assert "joint_order = pelvis," in meta


def test_malformed_container_rejected(tmp_path):
    d = save_clip(still_clip(5), tmp_path / "x")
    (d / "music.f32").write_bytes(b"\0" * 12)
    with pytest.raises(ContainerError, match="bytes"):
        load_clip(d)
    with pytest.raises(ContainerError):
        load_clip(tmp_path / "missing")
    with pytest.raises(ContainerError):
        ClipPair("bad", np.zeros((4, 438)), np.zeros((5, 147)))


def test_index_round_trip(tmp_path):
    dirs = [save_clip(still_clip(4, i, f"c{i}"), tmp_path / "clips" / f"c{i}") for i in range(3)]
    index = write_index(dirs, tmp_path / "index.txt", header={"seed": "3"})
    assert read_index_header(index) == {"seed": "3"}
    assert [p.name for p in read_index(index)] == ["c0", "c1", "c2"]
    assert [c.id for c in load_dataset(index)] == ["c0", "c1", "c2"]
    assert "clips/c0" in index.read_text()


# ---------------------------------------------------------------- split and windows


def test_split_sizes_and_determinism():
    ids = [f"c{i}" for i in range(10)]
    train, test = split_dataset(ids, seed=4)
    assert (len(train), len(test)) == (7, 3)
    assert set(train) | set(test) == set(ids) and not set(train) & set(test)
    assert (train, test) == split_dataset(list(reversed(ids)), seed=4)
    n_train = [len(split_dataset([str(i) for i in range(n)])[0]) for n in (2, 5, 64)]
    assert n_train == [1, 4, 45]
    with pytest.raises(ValueError):
        split_dataset(["a"])


def test_windows():
    long = still_clip(900, cid="long")
    wins = window_clips(long, 10.0, 10.0)
    assert [w.T for w in wins] == [300, 300, 300]
    for w, start in zip(wins, (0, 300, 600)):
        assert w.meta["parent"] == "long" and w.meta["offset"] == str(start)
        np.testing.assert_array_equal(w.gesture, long.gesture[start : start + 300])
        np.testing.assert_array_equal(w.music, long.music[start : start + 300])
    assert len(window_clips(long, 10.0, 5.0)) == 5
    assert len(window_clips(still_clip(300), 10.0)) == 1


def test_short_clip_gives_no_windows(caplog):
    with caplog.at_level(logging.WARNING):
        assert window_clips(still_clip(270), 10.0) == []
    assert "shorter" in caplog.text


# ---------------------------------------------------------------- quality control


def test_frozen_clip_rejected():
    clip = ClipPair("frozen", np.zeros((300, 438)), np.tile(rest_pose(), (300, 1)))
    rep = validate_clip(clip)
    assert rep.verdict == "reject" and rep.reasons == ["frozen-interval"]


def test_single_nan_frame_flagged_but_accepted():
    clip = still_clip(300)
    clip.gesture[120, 50] = np.nan
    rep = validate_clip(clip)
    assert rep.accepted
    assert list(rep.flagged_frames) == [120]
    assert rep.flag_counts()["non-finite"] == 1


def test_many_nan_frames_exceed_failure_ratio():
    clip = still_clip(300)
    clip.gesture[10:40:2, 7] = np.nan
    rep = validate_clip(clip)
    assert rep.failure_ratio == pytest.approx(15 / 300)
    assert rep.accepted
    clip.gesture[100:110, 7] = np.nan
    assert validate_clip(clip).reasons == ["failure-ratio"]


def test_root_jump_rejected():
    clip = still_clip(300)
    clip.gesture[150:, 2] += 0.8
    assert validate_clip(clip).reasons == ["global-shift"]


def test_frame_level_flags():
    clip = still_clip(100)
    clip.gesture[10, 3 + 6 * 5 : 3 + 6 * 6] = 0.0  # degenerate joint block
    clip.gesture[20, 1] = 6.0  # outside the box, and a jump in and out
    clip.gesture[30, 3 + 6 * 18 : 3 + 6 * 19] = [1, 0, 0, 0, -1, 0]  # 180 deg flip within one frame
    rep = validate_clip(clip)
    counts = rep.flag_counts()
    assert counts["rotation-invalid"] == 1 and rep.frame_flags[10, 1]
    assert counts["translation-outlier"] == 1 and rep.frame_flags[20, 2]
    assert rep.frame_flags[30, 3] and rep.frame_flags[31, 3]
    assert list(rep.flagged_frames) == [10, 20, 30, 31]
    assert rep.reasons == ["global-shift"]
    assert rep.summary().startswith("c: reject")


def test_qc_monotone_in_thresholds():
    clip = still_clip(300)
    clip.gesture[150:, 2] += 0.3
    clip.gesture[5, 0] = np.nan
    strict = QcThresholds(max_root_jump=0.2)
    loose = QcThresholds(**{**strict.as_dict(), "max_root_jump": 1.0, "max_failure_ratio": 0.5,
                            "translation_box": 50.0, "max_rot_velocity": 300.0, "frozen_seconds": 20.0})
    assert not validate_clip(clip, strict).accepted
    assert validate_clip(clip, loose).accepted
    rep = validate_clip(clip, strict)
    assert rep.reasons == validate_clip(clip, strict).reasons


def test_synthetic_clips_pass_qc_with_zero_flags(synth_clips):
    for clip in synth_clips:
        rep = validate_clip(clip)
        assert rep.accepted and not rep.frame_flags.any(), rep.summary()


# ---------------------------------------------------------------- synthesis


def test_synth_shapes_and_metadata(synth_clips):
    for clip in synth_clips:
        assert clip.music.shape == (300, 438) and clip.gesture.shape == (300, 147)
        assert 40 <= float(clip.meta["bpm"]) <= 180
        assert {"emotion", "type", "bpm", "phase", "dynamics", "melody"} <= set(clip.meta)


def test_synth_is_bit_identical_for_a_seed(synth_clips):
    again = synth_dataset(2, seed=11)
    for a, b in zip(again, synth_clips):
        assert a.music.tobytes() == b.music.tobytes()
        assert a.gesture.tobytes() == b.gesture.tobytes()
    other = synth_dataset(1, seed=12)[0]
    assert other.gesture.tobytes() != synth_clips[0].gesture.tobytes()
    with pytest.raises(ValueError):
        synth_dataset(0, seed=1)


def _stroke_period(clip, bpm, phase):
    """Spacing of cross-correlation peaks between an elbow angle and the click train, in frames."""
    _, rot = unpack_pose(clip.gesture.astype(np.float64))
    x = geodesic_angle(np.eye(3), sixd_to_rotmat(rot[:, JOINT_INDEX["right_elbow"]]))
    x = x - x.mean()
    click = np.zeros(len(x))
    idx = np.round(beat_times(bpm, phase, len(x) / 30) * 30).astype(int)
    click[idx[idx < len(x)]] = 1.0
    c = np.correlate(x, click, mode="full")
    peaks, _ = find_peaks(c, prominence=0.3 * np.ptp(c))
    return float(np.median(np.diff(peaks)))


@pytest.mark.parametrize("tempos", [None, (40.0, 75.0, 120.0, 180.0)])
def test_gesture_period_matches_tempo(tempos):
    cfg = SynthConfig() if tempos is None else dataclasses.replace(SynthConfig(), tempos=tempos)
    for i in range(8):
        sc = synth_clip(i, 5, cfg)
        expected = 30 * sc.factors.period
        assert abs(_stroke_period(sc.clip, sc.factors.bpm, sc.factors.phase) - expected) <= 1.0
