"""Desk-scale capture simulation: turbulent airflow, wind noise, and
Doppler-modulated ultrasound tones.

The wind speed along the mic axis follows an Ornstein-Uhlenbeck process
integrated at a 100 Hz control rate and interpolated to the audio rate.
Wind noise is spectrally shaped broadband noise whose instantaneous
amplitude tracks the squared wind speed.  Each ultrasound carrier is
frequency-modulated through the instantaneous Doppler law

    f(t) = f_c * (1 + v(t) / c)

by direct phase integration, optionally accompanied by an unmodulated
static-reflection copy of the carrier.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .audio import AudioClip
from .dsp import apply_filter, lowpass

__all__ = [
    "CAPTURE_RATE", "SPEED_OF_SOUND", "WIND_CONTROL_RATE", "MAX_WIND_SPEED",
    "WindProfile", "CaptureScene", "gen_wind_profile",
    "synth_wind_noise", "synth_ultrasound_tone", "synth_capture",
    "capture_components",
]

CAPTURE_RATE = 44_100.0
SPEED_OF_SOUND = 343.0
WIND_CONTROL_RATE = 100.0
MAX_WIND_SPEED = 8.0  # m/s; |v| must stay strictly below this


@dataclass(frozen=True)
class WindProfile:
    """Axis-projected wind speed, sampled at the control rate."""

    mean_speed: float
    reversion_rate: float
    volatility: float
    seed: int
    control_rate: float
    speeds: np.ndarray  # [n_control], m/s

    @property
    def duration_seconds(self) -> float:
        return len(self.speeds) / self.control_rate

    def at_rate(self, rate: float, n_samples: int) -> np.ndarray:
        """Cubic interpolation of the control series onto an audio grid."""
        t_audio = np.arange(n_samples) / rate
        t_ctrl = np.arange(len(self.speeds)) / self.control_rate
        if n_samples and t_audio[-1] > t_ctrl[-1] + 1e-9:
            raise ValueError(
                f"profile covers {t_ctrl[-1]:.3f}s, requested {t_audio[-1]:.3f}s")
        v = CubicSpline(t_ctrl, self.speeds)(t_audio)
        return np.clip(v, -MAX_WIND_SPEED + 1e-6, MAX_WIND_SPEED - 1e-6)


def stationary_std(reversion_rate: float, volatility: float) -> float:
    """Standard deviation of the OU stationary distribution."""
    if volatility == 0.0:
        return 0.0
    return volatility / np.sqrt(2.0 * reversion_rate)


def gen_wind_profile(duration_seconds: float, mean_speed: float,
                     reversion_rate: float, volatility: float, seed: int,
                     control_rate: float = WIND_CONTROL_RATE) -> WindProfile:
    """OU process dv = reversion*(mean - v)dt + volatility dW, exact
    discretisation at the control rate, started from the stationary law.

    Parameter sets whose stationary law puts non-negligible mass beyond
    +/-8 m/s (|mean| + 4 sigma >= 8) are rejected.
    """
    if duration_seconds <= 0:
        raise ValueError(f"duration must be positive, got {duration_seconds}")
    if reversion_rate <= 0 and volatility != 0.0:
        raise ValueError(f"reversion rate must be positive, got {reversion_rate}")
    if volatility < 0:
        raise ValueError(f"volatility must be non-negative, got {volatility}")
    sigma = stationary_std(reversion_rate, volatility)
    if abs(mean_speed) + 4.0 * sigma >= MAX_WIND_SPEED:
        raise ValueError(
            f"wind parameters imply |v| >= {MAX_WIND_SPEED} m/s with "
            f"non-negligible probability (|{mean_speed}| + 4*{sigma:.3f})")

    n = int(round(duration_seconds * control_rate)) + 1
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x57494E44]))
    dt = 1.0 / control_rate
    decay = np.exp(-reversion_rate * dt)
    step_std = sigma * np.sqrt(1.0 - decay * decay)

    v = np.empty(n)
    v[0] = mean_speed + sigma * rng.standard_normal()
    noise = rng.standard_normal(n - 1)
    for k in range(1, n):
        v[k] = mean_speed + (v[k - 1] - mean_speed) * decay + step_std * noise[k - 1]
    np.clip(v, -MAX_WIND_SPEED + 1e-6, MAX_WIND_SPEED - 1e-6, out=v)
    return WindProfile(mean_speed=mean_speed, reversion_rate=reversion_rate,
                       volatility=volatility, seed=int(seed),
                       control_rate=control_rate, speeds=v)


def _shaped_noise(n: int, rate: float, rng: np.random.Generator) -> np.ndarray:
    """White noise tilted by -3 dB/octave (flat below 20 Hz), unit RMS."""
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, d=1.0 / rate)
    shape = 1.0 / np.sqrt(np.maximum(freqs, 20.0) / 20.0)
    shaped = np.fft.irfft(spectrum * shape, n=n)
    rms = np.sqrt(np.mean(shaped ** 2))
    return shaped / rms if rms > 0 else shaped


def synth_wind_noise(wind: WindProfile, duration_seconds: float, seed: int,
                     rate: float = CAPTURE_RATE, gain: float = 1.0,
                     v_ref: float = 2.0,
                     lpf_cutoff_hz: float = 1000.0) -> AudioClip:
    """Turbulence noise: shaped broadband noise, low-passed, then modulated
    by the squared wind speed relative to ``v_ref``.  Zero wind -> silence."""
    n = int(round(duration_seconds * rate))
    if n <= 0:
        raise ValueError(f"duration must be positive, got {duration_seconds}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x4E4F4953]))
    base = _shaped_noise(n, rate, rng)
    base = apply_filter(lowpass(lpf_cutoff_hz), AudioClip(base, rate)).mono()
    v = wind.at_rate(rate, n)
    envelope = (v / v_ref) ** 2
    return AudioClip(gain * envelope * base, rate)


def synth_ultrasound_tone(wind: WindProfile, duration_seconds: float,
                          center_hz: float, amplitude: float,
                          rate: float = CAPTURE_RATE,
                          speed_of_sound: float = SPEED_OF_SOUND) -> AudioClip:
    """Doppler-modulated carrier via cumulative phase integration."""
    n = int(round(duration_seconds * rate))
    if n <= 0:
        raise ValueError(f"duration must be positive, got {duration_seconds}")
    if not (0.0 < center_hz and center_hz + 500.0 < rate / 2.0):
        raise ValueError(f"carrier {center_hz} Hz too close to Nyquist ({rate / 2} Hz)")
    v = wind.at_rate(rate, n)
    f_inst = center_hz * (1.0 + v / speed_of_sound)
    phase = 2.0 * np.pi * np.cumsum(f_inst) / rate
    return AudioClip(amplitude * np.sin(phase), rate)


@dataclass(frozen=True)
class CaptureScene:
    """Everything needed to render one simulated capture."""

    duration_seconds: float
    wind: WindProfile
    carriers: tuple[tuple[float, float], ...] = ((20000.0, 0.25), (21000.0, 0.25))
    noise_gain: float = 0.6
    static_reflection: float = 0.05
    speed_of_sound: float = SPEED_OF_SOUND
    rate: float = CAPTURE_RATE
    normalize_peak: float = 0.9

    def __post_init__(self):
        nyquist = self.rate / 2.0
        for hz, amp in self.carriers:
            if hz + 500.0 >= nyquist:
                raise ValueError(
                    f"carrier {hz} Hz + 500 Hz sideband exceeds Nyquist {nyquist} Hz")
            if amp < 0:
                raise ValueError(f"carrier amplitude must be non-negative, got {amp}")
        if self.duration_seconds > self.wind.duration_seconds + 1e-9:
            raise ValueError("wind profile shorter than scene duration")


def capture_components(scene: CaptureScene) -> dict[str, np.ndarray]:
    """Individually rendered additive components (pre-normalisation).

    Keys: 'noise', then 'tone_<hz>' and (if enabled) 'static_<hz>' per
    carrier.  ``synth_capture`` is exactly their sum, rescaled only if the
    summed peak exceeds the scene's normalisation ceiling.
    """
    noise_seed = int(np.random.SeedSequence([scene.wind.seed, 0x434150]).generate_state(1)[0])
    parts: dict[str, np.ndarray] = {}
    parts["noise"] = synth_wind_noise(
        scene.wind, scene.duration_seconds, seed=noise_seed,
        rate=scene.rate, gain=scene.noise_gain).samples[0]
    n = parts["noise"].shape[0]
    t = np.arange(n) / scene.rate
    for hz, amp in scene.carriers:
        tone = synth_ultrasound_tone(
            scene.wind, scene.duration_seconds, hz, amp,
            rate=scene.rate, speed_of_sound=scene.speed_of_sound)
        parts[f"tone_{int(round(hz))}"] = tone.samples[0]
        if scene.static_reflection > 0 and amp > 0:
            parts[f"static_{int(round(hz))}"] = (
                scene.static_reflection * amp * np.sin(2.0 * np.pi * hz * t))
    return parts


def synth_capture(scene: CaptureScene) -> AudioClip:
    """Render the capture: additive sum of components, peak-limited.

    The sum is rescaled (down only) when its peak exceeds
    ``scene.normalize_peak``, keeping component ratios intact.
    """
    parts = capture_components(scene)
    total = np.zeros_like(parts["noise"])
    for key in parts:
        total = total + parts[key]
    peak = np.max(np.abs(total)) if total.size else 0.0
    if peak > scene.normalize_peak:
        total = total * (scene.normalize_peak / peak)
    return AudioClip(total, scene.rate)
