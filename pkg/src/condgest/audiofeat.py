"""Per-frame acoustic descriptors at 30 fps.

Every descriptor frame concatenates six blocks::

    mfcc (20) | mfcc_delta (20) | chroma (12) | tempogram (384) | onset (1) | rms (1)

Frame ``t`` is analysed from a 1024-sample Hann window centred on sample
``round(t * sample_rate / 30)``; the signal is zero-padded at both ends.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.fft import dct, irfft, rfft
from scipy.io import wavfile
from scipy.signal import get_window, resample_poly

FPS = 30
SAMPLE_RATE = 22050
N_FFT = 1024
N_MELS = 64
N_MFCC = 20
DELTA_WIDTH = 9
TEMPOGRAM_WIN = 384
AMIN = 1e-10
TOP_DB = 80.0

BLOCK_LAYOUT: tuple[tuple[str, int], ...] = (
    ("mfcc", N_MFCC),
    ("mfcc_delta", N_MFCC),
    ("chroma", 12),
    ("tempogram", TEMPOGRAM_WIN),
    ("onset", 1),
    ("rms", 1),
)
DESCRIPTOR_DIM = sum(n for _, n in BLOCK_LAYOUT)
assert DESCRIPTOR_DIM == 438


def block_slices(layout=BLOCK_LAYOUT) -> dict[str, slice]:
    out, pos = {}, 0
    for name, n in layout:
        out[name] = slice(pos, pos + n)
        pos += n
    return out


BLOCKS = block_slices()


def layout_string(layout=BLOCK_LAYOUT) -> str:
    return ",".join(f"{name}:{n}" for name, n in layout)


def parse_layout(text: str) -> tuple[tuple[str, int], ...]:
    pairs = []
    for item in text.split(","):
        name, n = item.split(":")
        pairs.append((name.strip(), int(n)))
    return tuple(pairs)


class AudioError(ValueError):
    pass


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1 or s.size == 0:
            raise AudioError("audio must be a nonempty mono waveform")
        if not np.all(np.isfinite(s)):
            raise AudioError(f"audio has non-finite sample at index {int(np.argmin(np.isfinite(s)))}")
        object.__setattr__(self, "samples", s)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def n_frames(self) -> int:
        return (self.samples.size * FPS) // self.sample_rate

    def resampled(self, rate: int = SAMPLE_RATE) -> "AudioClip":
        if rate == self.sample_rate:
            return self
        g = np.gcd(rate, self.sample_rate)
        return AudioClip(resample_poly(self.samples, rate // g, self.sample_rate // g), rate)


@dataclass(frozen=True)
class MusicDescriptor:
    frames: np.ndarray  # (T, 438) float32
    fps: int = FPS
    layout: tuple[tuple[str, int], ...] = field(default=BLOCK_LAYOUT)

    def __len__(self) -> int:
        return len(self.frames)

    def block(self, name: str) -> np.ndarray:
        return self.frames[:, block_slices(self.layout)[name]]


def read_wav(path: str | Path) -> AudioClip:
    """Read PCM16/PCM32/float WAV, downmix to mono and resample to the internal rate."""
    rate, data = wavfile.read(str(path))
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        x = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    else:
        x = data.astype(np.float64)
    if x.ndim == 2:
        x = x.mean(axis=1)
    return AudioClip(x, int(rate)).resampled(SAMPLE_RATE)


def write_wav(path: str | Path, clip: AudioClip) -> None:
    pcm = np.clip(np.round(clip.samples * 32767.0), -32768, 32767).astype(np.int16)
    wavfile.write(str(path), clip.sample_rate, pcm)


# ---------------------------------------------------------------- framing


def hop_length(sample_rate: int = SAMPLE_RATE) -> int:
    return int(round(sample_rate / FPS))


def frame_centers(clip: AudioClip) -> np.ndarray:
    t = np.arange(clip.n_frames)
    return np.round(t * clip.sample_rate / FPS).astype(np.int64)


def _frames(clip: AudioClip) -> np.ndarray:
    if clip.n_frames < 1:
        raise AudioError(f"clip of {clip.duration:.4f} s is shorter than one frame at {FPS} fps")
    half = N_FFT // 2
    padded = np.pad(clip.samples, (half, half))
    idx = frame_centers(clip)[:, None] + np.arange(N_FFT)[None, :]
    return padded[idx]


@functools.lru_cache(maxsize=8)
def _hann(n: int) -> np.ndarray:
    return get_window("hann", n, fftbins=True)


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


@functools.lru_cache(maxsize=8)
def mel_filterbank(sample_rate: int = SAMPLE_RATE, n_fft: int = N_FFT, n_mels: int = N_MELS) -> np.ndarray:
    """Area-normalised triangular filters, shape (n_mels, n_fft // 2 + 1)."""
    freqs = np.fft.rfftfreq(n_fft, 1.0 / sample_rate)
    edges = _mel_to_hz(np.linspace(_hz_to_mel(0.0), _hz_to_mel(sample_rate / 2), n_mels + 2))
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (freqs[None, :] - lo) / (mid - lo)
    down = (hi - freqs[None, :]) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(up, down))
    return fb * (2.0 / (hi - lo))


def _spectra(clip: AudioClip) -> tuple[np.ndarray, np.ndarray]:
    frames = _frames(clip)
    mag = np.abs(rfft(frames * _hann(N_FFT), axis=-1))
    return frames, mag


def _log_mel(mag: np.ndarray, sample_rate: int) -> np.ndarray:
    mel = (mag**2) @ mel_filterbank(sample_rate).T
    db = 10.0 * np.log10(np.maximum(mel, AMIN))
    # floor at TOP_DB below the clip peak so far sidelobes do not flicker
    return np.maximum(db, db.max() - TOP_DB)


# ---------------------------------------------------------------- blocks


def mfcc_from_log_mel(log_mel: np.ndarray, n_mfcc: int = N_MFCC) -> np.ndarray:
    return dct(log_mel, type=2, norm="ortho", axis=-1)[:, :n_mfcc]


def delta(x: np.ndarray, width: int = DELTA_WIDTH) -> np.ndarray:
    """Centred regression slope over ``width`` frames, edge frames replicated."""
    n = width // 2
    padded = np.pad(x, ((n, n), (0, 0)), mode="edge")
    T = len(x)
    num = np.zeros_like(x, dtype=np.float64)
    for k in range(1, n + 1):
        num += k * (padded[n + k : n + k + T] - padded[n - k : n - k + T])
    return num / (2.0 * sum(k * k for k in range(1, n + 1)))


def pitch_classes(sample_rate: int = SAMPLE_RATE, n_fft: int = N_FFT,
                  fmin: float = 27.5, fmax: float = 5000.0) -> np.ndarray:
    """Pitch class (C=0 ... A=9 ... B=11) of each rfft bin, -1 outside [fmin, fmax]."""
    freqs = np.fft.rfftfreq(n_fft, 1.0 / sample_rate)
    pc = np.full(freqs.shape, -1, dtype=np.int64)
    ok = (freqs >= fmin) & (freqs <= fmax)
    pc[ok] = (np.round(12.0 * np.log2(freqs[ok] / 440.0)).astype(np.int64) + 9) % 12
    return pc


def chroma_from_magnitude(mag: np.ndarray, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    pc = pitch_classes(sample_rate, (mag.shape[-1] - 1) * 2)
    fold = np.zeros((mag.shape[-1], 12))
    ok = pc >= 0
    fold[np.nonzero(ok)[0], pc[ok]] = 1.0
    chroma = mag @ fold
    peak = chroma.max(axis=-1, keepdims=True)
    return np.where(peak > AMIN, chroma / np.maximum(peak, AMIN), 0.0)


def onset_from_log_mel(log_mel: np.ndarray) -> np.ndarray:
    flux = np.maximum(0.0, np.diff(log_mel, axis=0)).mean(axis=-1)
    return np.concatenate([[0.0], flux])


def onset_envelope(clip: AudioClip) -> np.ndarray:
    """Half-wave rectified log-mel spectral flux, one value per frame; frame 0 is 0."""
    clip = clip.resampled(SAMPLE_RATE)
    _, mag = _spectra(clip)
    return onset_from_log_mel(_log_mel(mag, clip.sample_rate))


def tempogram(onset, win: int = TEMPOGRAM_WIN) -> np.ndarray:
    """Local autocorrelation of the onset envelope, shape (T, win).

    Row ``t`` is the autocorrelation (lags 0..win-1) of a Hann-weighted,
    zero-padded window of the envelope centred on ``t``, divided by its lag-0
    value. All-zero windows give all-zero rows.
    """
    onset = np.asarray(onset, dtype=np.float64)
    if onset.ndim != 1 or onset.size < 1:
        raise ValueError("onset envelope must be a nonempty 1-d array")
    if not np.all(np.isfinite(onset)):
        raise ValueError("onset envelope has non-finite values")
    half = win // 2
    padded = np.pad(onset, (half, win - half))
    idx = np.arange(onset.size)[:, None] + np.arange(win)[None, :]
    segs = padded[idx] * _hann(win)
    spec = rfft(segs, n=2 * win, axis=-1)
    ac = irfft(np.abs(spec) ** 2, n=2 * win, axis=-1)[:, :win]
    lag0 = ac[:, :1]
    nonzero = np.abs(segs).max(axis=-1, keepdims=True) > 0
    out = np.where(nonzero, ac / np.where(nonzero, lag0, 1.0), 0.0)
    # the FFT route leaves ~1e-17 noise where the exact sum is 0
    out[np.abs(out) < 1e-12] = 0.0
    return out


def extract_descriptor(clip: AudioClip) -> MusicDescriptor:
    clip = clip.resampled(SAMPLE_RATE)
    frames, mag = _spectra(clip)
    log_mel = _log_mel(mag, clip.sample_rate)
    mfcc = mfcc_from_log_mel(log_mel)
    onset = onset_from_log_mel(log_mel)
    rms = np.sqrt(np.mean(frames**2, axis=-1))
    feats = np.concatenate(
        [mfcc, delta(mfcc), chroma_from_magnitude(mag, clip.sample_rate), tempogram(onset),
         onset[:, None], rms[:, None]],
        axis=-1,
    )
    assert feats.shape[1] == DESCRIPTOR_DIM
    return MusicDescriptor(feats.astype(np.float32))
