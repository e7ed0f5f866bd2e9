"""Synthetic clean-speech generator.

Produces speech-like utterances good enough to train and score the toy
models on: a harmonic glottal source with per-speaker pitch and formant
targets, syllabic amplitude modulation, interleaved fricative noise bursts
and short pauses.  Not a TTS system; the goal is a controllable,
licence-free stand-in with speech-shaped spectra and temporal envelopes so
intelligibility metrics behave sensibly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .audio import AudioClip, write_wav

__all__ = ["SpeakerTraits", "sample_speaker", "synth_utterance", "synth_clean_corpus"]


@dataclass(frozen=True)
class SpeakerTraits:
    """Per-speaker voice parameters."""

    f0_hz: float                 # median pitch
    formants: tuple[float, ...]  # first three formant centers
    syllable_rate: float         # syllables per second
    brightness: float            # harmonic rolloff exponent


def sample_speaker(rng: np.random.Generator) -> SpeakerTraits:
    f0 = rng.uniform(95.0, 230.0)
    f1 = rng.uniform(350.0, 800.0)
    f2 = rng.uniform(1000.0, 2000.0)
    f3 = rng.uniform(2300.0, 3200.0)
    return SpeakerTraits(
        f0_hz=f0,
        formants=(f1, f2, f3),
        syllable_rate=rng.uniform(2.5, 4.5),
        brightness=rng.uniform(0.8, 1.3),
    )


def _formant_filter(x: np.ndarray, centers, bandwidths, rate: float) -> np.ndarray:
    y = x
    for fc, bw in zip(centers, bandwidths):
        r = np.exp(-np.pi * bw / rate)
        theta = 2.0 * np.pi * fc / rate
        a = [1.0, -2.0 * r * np.cos(theta), r * r]
        y = lfilter([1.0 - r], a, y)
    return y


def _smooth_modulation(n: int, rate: float, hz: float,
                       rng: np.random.Generator) -> np.ndarray:
    """Random low-frequency control signal in [0, 1] via interpolation."""
    n_ctrl = max(int(np.ceil(n / rate * hz)) + 2, 4)
    ctrl = rng.uniform(0.0, 1.0, size=n_ctrl)
    t = np.arange(n) / rate * hz
    idx = np.minimum(t.astype(int), n_ctrl - 2)
    frac = t - idx
    smooth = 0.5 - 0.5 * np.cos(np.pi * frac)
    return ctrl[idx] * (1 - smooth) + ctrl[idx + 1] * smooth


def synth_utterance(traits: SpeakerTraits, duration_seconds: float,
                    rate: float, rng: np.random.Generator) -> np.ndarray:
    """One utterance: voiced harmonic stream with formants, plus fricative
    bursts, shaped by a syllabic envelope with embedded short pauses."""
    n = int(round(duration_seconds * rate))
    t = np.arange(n) / rate

    # pitch contour: slow random walk around the speaker median
    f0 = traits.f0_hz * (1.0 + 0.15 * (2.0 * _smooth_modulation(n, rate, 1.5, rng) - 1.0))
    phase = 2.0 * np.pi * np.cumsum(f0) / rate
    voiced = np.zeros(n)
    max_harm = int(np.floor((rate / 2.0 - 200.0) / traits.f0_hz))
    for k in range(1, min(max_harm, 24) + 1):
        voiced += np.sin(k * phase + rng.uniform(0, 2 * np.pi)) / k ** traits.brightness
    voiced = _formant_filter(voiced, traits.formants, (80.0, 120.0, 180.0), rate)
    voiced /= np.max(np.abs(voiced)) + 1e-12

    # fricative stream: bandpassed noise with its own on/off pattern
    fric = rng.standard_normal(n)
    fric = _formant_filter(fric, (3300.0,), (1500.0,), rate)
    fric /= np.max(np.abs(fric)) + 1e-12
    fric_gate = (_smooth_modulation(n, rate, traits.syllable_rate * 0.7, rng) > 0.72)

    # syllabic envelope with pauses
    syl = _smooth_modulation(n, rate, traits.syllable_rate, rng) ** 1.5
    pause = (_smooth_modulation(n, rate, 0.8, rng) > 0.15).astype(float)
    envelope = syl * pause

    x = envelope * (voiced + 0.35 * fric * fric_gate)
    rms = np.sqrt(np.mean(x ** 2))
    if rms > 0:
        x *= 0.06 / rms
    peak = np.max(np.abs(x))
    if peak > 0.9:
        x *= 0.9 / peak
    return x


def synth_clean_corpus(out_dir: str | Path, n_speakers: int,
                       utterances_per_speaker: int,
                       utterance_seconds: float = 5.0,
                       rate: float = 16000.0, seed: int = 0) -> list[Path]:
    """Write one WAV per speaker (utterances concatenated back to back) and
    return the paths sorted by speaker id."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for s in range(n_speakers):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x535045, s]))
        traits = sample_speaker(rng)
        chunks = [synth_utterance(traits, utterance_seconds, rate, rng)
                  for _ in range(utterances_per_speaker)]
        clip = AudioClip(np.concatenate(chunks), rate)
        path = out_dir / f"speaker{s:03d}.wav"
        write_wav(clip, path)
        paths.append(path)
    return paths
