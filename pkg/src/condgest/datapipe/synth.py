"""Synthetic paired music/gesture clips.

Each clip draws a tempo marking, a dynamic marking and an emotion archetype
from small sets of levels, plus a continuous beat phase and a melody with one
random note per beat. The audio is an evenly clicked beat over a harmonic
two-note tone that follows the melody and swells on each beat, with a soft
sustained partial whose frequency is set by the archetype.

The gesture is a beat-locked two-arm stroke built from axis-angle rotations.
Stroke size follows the dynamic level and the elbows close in as the tempo
rises. Arm height, head turn and wrist twist track the sounding note, so the
posture is a causal function of the music frame by frame. The archetype sets
stroke sharpness and torso lean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from ..audiofeat import SAMPLE_RATE, AudioClip, extract_descriptor
from ..numcore.rng import make_rng
from ..pose import FPS, JOINT_INDEX, N_JOINTS, axis_angle_to_rotmat, pack_pose, rotmat_to_sixd
from .clip import ClipPair

# interval of the second tone (semitones), sustained colour partial (Hz), swell decay (s),
# stroke sharpness, body sway, torso lean (rad)
ARCHETYPES: dict[str, dict[str, float]] = {
    "passionate": dict(interval=7, colour=2800.0, decay=0.08, sharp=0.6, sway=1.0, lean=0.2),
    "solemn": dict(interval=12, colour=600.0, decay=0.4, sharp=0.0, sway=0.3, lean=-0.1),
    "joyful": dict(interval=4, colour=4500.0, decay=0.12, sharp=0.3, sway=0.8, lean=0.1),
    "lyrical": dict(interval=5, colour=1700.0, decay=0.3, sharp=-0.3, sway=0.6, lean=0.0),
    "sorrowful": dict(interval=3, colour=1000.0, decay=0.25, sharp=0.15, sway=0.2, lean=-0.2),
}
CONDUCTING_TYPES = ("choral", "solo")
_EASE = float(np.exp(-1.0 / (0.15 * FPS)))


def _harmonic(fn, m: int, gain: float):
    return lambda note: gain * fn(2 * np.pi * m * np.asarray(note) / 12)


# posture offsets (rad) driven by the sounding note: arm height rises with pitch,
# and the pitch class turns the head and twists the right wrist
_NOTE_CODE = {
    "lift": lambda note: 0.8 * np.asarray(note) / 11,
    ("head", 1): _harmonic(np.cos, 1, 0.6),
    ("right_wrist", 1): _harmonic(np.sin, 1, 0.6),
}


@dataclass(frozen=True)
class SynthConfig:
    seconds: float = 10.0
    # larghetto, andante and allegro, in beats per minute
    tempos: tuple[float, ...] = (60.0, 100.0, 140.0)
    # piano, mezzo-forte and forte as tone level scale
    dynamics: tuple[float, ...] = (0.3, 0.65, 1.0)
    keys: int = 12  # semitone steps above A2
    click_level: float = 0.6
    rotation_noise: float = 0.004  # rad, per frame
    posture_jitter: float = 0.0  # rad, per clip
    audio_noise: float = 0.003
    sample_rate: int = SAMPLE_RATE


@dataclass(frozen=True)
class ClipFactors:
    bpm: float
    phase: float  # seconds to the first beat
    dynamics: float
    melody: tuple[int, ...]  # note per beat (semitones above A2); entry 0 sounds before the first beat
    archetype: str
    conducting_type: str

    @property
    def period(self) -> float:
        return 60.0 / self.bpm


@dataclass
class SynthClip:
    clip: ClipPair
    audio: AudioClip
    factors: ClipFactors


def _shape(psi: np.ndarray, sharp: float) -> np.ndarray:
    return (np.cos(psi) + sharp * np.cos(2 * psi)) / (1.0 + abs(sharp))


def beat_times(bpm: float, phase: float, seconds: float) -> np.ndarray:
    return np.arange(phase, seconds, 60.0 / bpm)


def tone_root(note):
    """Root frequency in Hz, ``note`` semitones above 110 Hz."""
    return 110.0 * 2.0 ** (np.asarray(note) / 12)


def notes_at(f: ClipFactors, t: np.ndarray, seconds: float) -> np.ndarray:
    """Melody note sounding at each time in ``t``."""
    beats = beat_times(f.bpm, f.phase, seconds)
    return np.asarray(f.melody)[np.searchsorted(beats, t, side="right")]


def synth_audio(f: ClipFactors, cfg: SynthConfig, rng: np.random.Generator) -> AudioClip:
    a = ARCHETYPES[f.archetype]
    sr = cfg.sample_rate
    n = int(round(cfg.seconds * sr))
    t = np.arange(n) / sr
    x = np.zeros(n)
    burst_t = np.arange(int(0.03 * sr)) / sr
    burst = np.sin(2 * np.pi * 1500.0 * burst_t) * np.exp(-burst_t / 0.004)
    beats = beat_times(f.bpm, f.phase, cfg.seconds)
    for b in beats:
        i = int(round(b * sr))
        seg = burst[: max(0, min(burst.size, n - i))]
        x[i : i + seg.size] += cfg.click_level * seg
    # time since the most recent beat (large before the first one)
    idx = np.searchsorted(beats, t, side="right") - 1
    since = np.where(idx >= 0, t - beats[np.maximum(idx, 0)], 10.0)
    env = 0.3 * f.dynamics * (0.5 + 0.5 * np.exp(-since / a["decay"]))
    # integrate frequency so note changes do not click
    root = np.cumsum(tone_root(notes_at(f, t, cfg.seconds))) / sr
    second = root * 2 ** (a["interval"] / 12)
    # a choir sustains the second note; a soloist's line is a single voice
    voices = 0.8 if f.conducting_type == "choral" else 0.0
    tone = np.zeros(n)
    for h in (1, 2, 3):
        tone += 0.4 ** (h - 1) * (np.sin(2 * np.pi * h * root) + voices * np.sin(2 * np.pi * h * second))
    x += env * tone / 1.5
    x += 0.05 * np.sin(2 * np.pi * a["colour"] * t)
    x += cfg.audio_noise * rng.standard_normal(n)
    return AudioClip(np.clip(x, -1.0, 1.0), sr)


def synth_gesture(f: ClipFactors, cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    a = ARCHETYPES[f.archetype]
    T = int(round(cfg.seconds * FPS))
    s = np.arange(T) / FPS
    psi = 2 * np.pi * (s - f.phase) / f.period
    amp = 0.2 + 0.6 * f.dynamics
    sharp, sway = a["sharp"], a["sway"]
    # posture eases toward the current note's target with a 0.15 s time constant
    note = notes_at(f, s, cfg.seconds)
    target = np.stack([code(note) for code in _NOTE_CODE.values()], axis=1)
    pose = dict(zip(_NOTE_CODE, lfilter([1 - _EASE], [1, -_EASE], target, axis=0, zi=_EASE * target[:1])[0].T))
    lift = pose.pop("lift")
    lo, hi = min(cfg.tempos), max(cfg.tempos)
    tight = (f.bpm - lo) / (hi - lo) if hi > lo else 0.5
    # solo conducting keeps the left hand lower and turned in; the stroke itself is shared
    left_rest = 0.0 if f.conducting_type == "choral" else 0.3

    aa = np.zeros((T, N_JOINTS, 3))
    aa += rng.normal(0.0, cfg.posture_jitter, size=(1, N_JOINTS, 3))
    j = JOINT_INDEX
    aa[:, j["right_shoulder"], 0] += amp * _shape(psi, sharp)
    aa[:, j["right_shoulder"], 2] += 0.9 + lift + 0.3 * amp * np.sin(psi)
    aa[:, j["right_elbow"], 1] += 0.4 + 1.2 * tight + 0.4 * amp * _shape(psi - 0.4, sharp)
    aa[:, j["right_wrist"], 0] += 0.2 * amp * _shape(psi - 0.8, sharp)
    aa[:, j["left_shoulder"], 0] += amp * _shape(psi, sharp)
    aa[:, j["left_shoulder"], 2] += -0.9 - lift + left_rest - 0.3 * amp * np.sin(psi)
    aa[:, j["left_elbow"], 1] += -0.4 - 1.2 * tight - 0.4 * amp * _shape(psi - 0.4, sharp)
    aa[:, j["left_wrist"], 0] += 0.2 * amp * _shape(psi - 0.8, sharp)
    aa[:, j["spine3"], 1] += 0.05 * sway * np.sin(psi)
    aa[:, j["spine3"], 0] += a["lean"]
    aa[:, j["head"], 0] += 0.5 * a["lean"]
    for (joint, axis), offset in pose.items():
        aa[:, j[joint], axis] += offset
    aa[:, j["neck"], 0] += 0.05 * amp * _shape(psi, sharp)
    aa[:, j["pelvis"], 1] += 0.03 * sway * np.sin(psi)
    aa += rng.normal(0.0, cfg.rotation_noise, size=aa.shape)

    rot6 = rotmat_to_sixd(axis_angle_to_rotmat(aa))
    trans = np.zeros((T, 3))
    trans[:, 0] = 0.05 * sway * np.sin(psi)
    trans[:, 1] = 0.9 + 0.01 * amp * _shape(psi, sharp)
    return pack_pose(trans, rot6).astype(np.float32)


def sample_factors(index: int, seed: int, cfg: SynthConfig) -> ClipFactors:
    rng = make_rng(seed, "synth", index)
    bpm = float(rng.choice(cfg.tempos))
    phase = float(rng.uniform(0.0, 60.0 / bpm))
    n_notes = len(beat_times(bpm, phase, cfg.seconds)) + 1
    return ClipFactors(
        bpm=bpm,
        phase=phase,
        dynamics=float(rng.choice(cfg.dynamics)),
        melody=tuple(int(k) for k in rng.integers(cfg.keys, size=n_notes)),
        archetype=sorted(ARCHETYPES)[int(rng.integers(len(ARCHETYPES)))],
        conducting_type=CONDUCTING_TYPES[int(rng.integers(len(CONDUCTING_TYPES)))],
    )


def synth_clip(index: int, seed: int, cfg: SynthConfig | None = None) -> SynthClip:
    cfg = cfg or SynthConfig()
    f = sample_factors(index, seed, cfg)
    audio = synth_audio(f, cfg, make_rng(seed, "synth-audio", index))
    music = extract_descriptor(audio).frames
    gesture = synth_gesture(f, cfg, make_rng(seed, "synth-gesture", index))
    T = min(len(music), len(gesture))
    meta = {
        "emotion": f.archetype,
        "type": f.conducting_type,
        "bpm": f"{f.bpm:.6f}",
        "phase": f"{f.phase:.6f}",
        "dynamics": f"{f.dynamics:.6f}",
        "melody": " ".join(map(str, f.melody)),
    }
    clip = ClipPair(f"clip_{index:04d}", music[:T], gesture[:T], meta=meta)
    return SynthClip(clip, audio, f)


def synth_dataset(n_clips: int, seed: int, cfg: SynthConfig | None = None) -> list[ClipPair]:
    if n_clips < 1:
        raise ValueError("n_clips must be >= 1")
    return [synth_clip(i, seed, cfg).clip for i in range(n_clips)]
