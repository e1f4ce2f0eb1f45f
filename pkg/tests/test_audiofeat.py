import numpy as np
import pytest

from condgest.audiofeat import (
    BLOCKS,
    DESCRIPTOR_DIM,
    SAMPLE_RATE,
    AudioClip,
    AudioError,
    extract_descriptor,
    hop_length,
    layout_string,
    onset_envelope,
    parse_layout,
    read_wav,
    tempogram,
    write_wav,
)

SR = SAMPLE_RATE


def sine(freq, seconds, amp=0.5):
    t = np.arange(int(seconds * SR)) / SR
    return amp * np.sin(2 * np.pi * freq * t)


def test_ten_second_clip_shape():
    d = extract_descriptor(AudioClip(sine(220, 10.0)))
    assert d.frames.shape == (300, 438) == (300, DESCRIPTOR_DIM)
    assert d.frames.dtype == np.float32
    assert np.all(np.isfinite(d.frames))


def test_frame_count_is_floor_of_duration():
    assert len(extract_descriptor(AudioClip(sine(220, 1.99)))) == 59


def test_hop_at_default_rate():
    assert hop_length() == 735


def test_silence():
    d = extract_descriptor(AudioClip(np.zeros(2 * SR)))
    np.testing.assert_array_equal(d.block("onset"), 0.0)
    np.testing.assert_array_equal(d.block("rms"), 0.0)
    mfcc = d.block("mfcc")
    np.testing.assert_array_equal(mfcc, np.broadcast_to(mfcc[:1], mfcc.shape))
    np.testing.assert_array_equal(onset_envelope(AudioClip(np.zeros(SR))), 0.0)


def test_a440_maps_to_pitch_class_nine():
    chroma = extract_descriptor(AudioClip(sine(440, 2.0))).block("chroma")
    assert int(np.argmax(chroma.mean(axis=0))) == 9


@pytest.mark.parametrize("t0", [17, 40, 71])
def test_click_onset_peak(t0):
    x = np.zeros(3 * SR)
    x[round(t0 * SR / 30)] = 0.9
    env = onset_envelope(AudioClip(x))
    assert abs(int(np.argmax(env)) - t0) <= 1
    assert np.all(env >= 0)


def test_steady_sine_has_no_flux_after_first_frames():
    env = onset_envelope(AudioClip(sine(330, 3.0)))
    assert env[0] == 0.0
    # the first frames see the zero padding at the clip start, and the last ones see it at the end
    assert np.abs(env[2:-2]).max() < 1e-6


def test_tempogram_silence_and_normalisation():
    np.testing.assert_array_equal(tempogram(np.zeros(50)), 0.0)
    rng = np.random.default_rng(0)
    tg = tempogram(rng.random(120))
    np.testing.assert_allclose(tg[:, 0], 1.0, atol=1e-12)
    assert tg.shape == (120, 384)


@pytest.mark.parametrize("period", [9, 15, 23])
def test_tempogram_peak_at_period(period):
    onset = np.zeros(600)
    onset[::period] = 1.0
    row = tempogram(onset)[300]
    assert row[period] > row[period - 1] and row[period] > row[period + 1]


def test_tempogram_rejects_bad_input():
    with pytest.raises(ValueError):
        tempogram(np.array([]))
    with pytest.raises(ValueError):
        tempogram(np.array([0.0, np.inf]))


@pytest.mark.parametrize("k", [1, 4])
def test_time_shift_covariance(k):
    rng = np.random.default_rng(1)
    x = np.zeros(4 * SR)
    for t in rng.integers(SR // 2, 3 * SR, size=6):
        x[t : t + 2000] += sine(600, 2000 / SR) * np.hanning(2000)
    x += 0.01 * sine(150, 4.0)
    shifted = np.concatenate([np.zeros(k * 735), x])[: x.size]
    a = onset_envelope(AudioClip(x))
    b = onset_envelope(AudioClip(shifted))
    np.testing.assert_allclose(b[k + 20 : -20], a[20 : -20 - k], atol=1e-4)


def test_deterministic():
    x = sine(250, 1.0) + 0.1 * np.random.default_rng(2).normal(size=SR)
    a = extract_descriptor(AudioClip(x)).frames
    b = extract_descriptor(AudioClip(x)).frames
    assert a.tobytes() == b.tobytes()


def test_invalid_audio_rejected():
    with pytest.raises(AudioError):
        AudioClip(np.array([]))
    x = np.zeros(100)
    x[42] = np.nan
    with pytest.raises(AudioError, match="42"):
        AudioClip(x)
    with pytest.raises(AudioError):
        extract_descriptor(AudioClip(np.zeros(100)))


def test_layout_round_trip():
    assert sum(s.stop - s.start for s in BLOCKS.values()) == 438
    assert parse_layout(layout_string()) == tuple((k, s.stop - s.start) for k, s in BLOCKS.items())


def test_wav_round_trip_resamples(tmp_path):
    rate = 44100
    t = np.arange(rate) / rate
    clip = AudioClip(0.5 * np.sin(2 * np.pi * 440 * t), rate)
    write_wav(tmp_path / "a.wav", clip)
    back = read_wav(tmp_path / "a.wav")
    assert back.sample_rate == SR and back.samples.size == SR
    assert int(np.argmax(extract_descriptor(back).block("chroma").mean(axis=0))) == 9
