"""Deterministic signal-processing primitives.

Butterworth filtering (zero-phase by default so multichannel alignment is
preserved), Kaiser-window polyphase resampling, quadrature downconversion,
and a plain STFT/iSTFT pair.  All operations are pure functions; filter
state is float64 internally regardless of I/O precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .audio import AudioClip

# Default filter orders: steep enough for the band separations the feature
# cascade needs, numerically stable as biquad cascades at 44.1 kHz.
DEFAULT_LOWPASS_ORDER = 8
DEFAULT_HIGHPASS_ORDER = 4


@dataclass(frozen=True)
class FilterSpec:
    """Butterworth filter description, applied as a biquad (SOS) cascade."""

    kind: str  # "lowpass" | "highpass"
    cutoff_hz: float
    order: int
    zero_phase: bool = True

    def __post_init__(self):
        if self.kind not in ("lowpass", "highpass"):
            raise ValueError(f"unknown filter kind {self.kind!r}")
        if self.order < 1:
            raise ValueError(f"filter order must be >= 1, got {self.order}")
        if self.cutoff_hz <= 0:
            raise ValueError(f"cutoff must be positive, got {self.cutoff_hz}")

    def sos(self, sample_rate: float) -> np.ndarray:
        if self.cutoff_hz >= sample_rate / 2:
            raise ValueError(
                f"cutoff {self.cutoff_hz} Hz is not below Nyquist ({sample_rate / 2} Hz)")
        return sps.butter(self.order, self.cutoff_hz, btype=self.kind,
                          fs=sample_rate, output="sos")


def lowpass(cutoff_hz: float, order: int = DEFAULT_LOWPASS_ORDER,
            zero_phase: bool = True) -> FilterSpec:
    return FilterSpec("lowpass", cutoff_hz, order, zero_phase)


def highpass(cutoff_hz: float, order: int = DEFAULT_HIGHPASS_ORDER,
             zero_phase: bool = True) -> FilterSpec:
    return FilterSpec("highpass", cutoff_hz, order, zero_phase)


def apply_filter(spec: FilterSpec, clip: AudioClip) -> AudioClip:
    """Filter every channel.  Zero-phase runs the cascade forward-backward,
    doubling the effective order and leaving zero group delay."""
    sos = spec.sos(clip.sample_rate)
    x = clip.samples  # float64 already
    if spec.zero_phase:
        y = sps.sosfiltfilt(sos, x, axis=1)
    else:
        y = sps.sosfilt(sos, x, axis=1)
    return AudioClip(y, clip.sample_rate)


def butterworth_gain_db(spec: FilterSpec, freq_hz: float) -> float:
    """Analytic magnitude response in dB: |H|^2 = 1 / (1 + (f/fc)^(2n)),
    squared again for zero-phase application.  Test oracle, independent of
    the sosfilt path."""
    ratio = freq_hz / spec.cutoff_hz
    if spec.kind == "highpass":
        ratio = 1.0 / ratio
    mag_sq = 1.0 / (1.0 + ratio ** (2 * spec.order))
    if spec.zero_phase:
        mag_sq = mag_sq ** 2
    return 10.0 * np.log10(mag_sq)


def resample(clip: AudioClip, target_rate: float) -> AudioClip:
    """Rational polyphase resampling with an 80 dB Kaiser-window filter.

    Output length is round(n * target / source); resample_poly's ceil rule
    is trimmed/padded to match.
    """
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if target_rate == clip.sample_rate:
        return clip

    from fractions import Fraction
    ratio = Fraction(target_rate / clip.sample_rate).limit_denominator(10000)
    up, down = ratio.numerator, ratio.denominator

    beta = sps.kaiser_beta(80.0)
    y = sps.resample_poly(clip.samples, up, down, axis=1, window=("kaiser", beta))

    n_out = int(round(clip.n_samples * target_rate / clip.sample_rate))
    if y.shape[1] > n_out:
        y = y[:, :n_out]
    elif y.shape[1] < n_out:
        y = np.pad(y, ((0, 0), (0, n_out - y.shape[1])))
    return AudioClip(y, target_rate)


def quadrature_downconvert(clip: AudioClip, center_hz: float,
                           lpf_cutoff_hz: float,
                           lpf_order: int = DEFAULT_LOWPASS_ORDER) -> AudioClip:
    """Mix a single-channel clip with cosine and sine at the carrier and
    lowpass the products.

    Returns a 2-channel clip (in-phase, quadrature) at the input rate.
    A tone at center + delta lands at |delta| with constant I/Q envelope;
    the 2*center image falls in the lowpass stopband.
    """
    if clip.channel_count != 1:
        raise ValueError("quadrature downconversion expects a single-channel clip")
    nyquist = clip.sample_rate / 2
    if center_hz + lpf_cutoff_hz >= nyquist:
        raise ValueError(
            f"center {center_hz} + cutoff {lpf_cutoff_hz} must stay below Nyquist {nyquist}")

    t = np.arange(clip.n_samples, dtype=np.float64) / clip.sample_rate
    phase = 2.0 * np.pi * center_hz * t
    x = clip.mono()
    mixed = np.stack([x * np.cos(phase), x * np.sin(phase)])
    lpf = lowpass(lpf_cutoff_hz, lpf_order)
    return apply_filter(lpf, AudioClip(mixed, clip.sample_rate))


# ---------------------------------------------------------------------------
# STFT / iSTFT
# ---------------------------------------------------------------------------

@dataclass
class Spectrogram:
    """One-sided complex STFT: bins indexed (frequency, frame)."""

    bins: np.ndarray  # complex128, shape (fft_size // 2 + 1, n_frames)
    fft_size: int
    hop: int
    window: np.ndarray
    sample_rate: float
    n_samples: int  # original waveform length, for exact reconstruction

    @property
    def n_freqs(self) -> int:
        return self.bins.shape[0]

    @property
    def n_frames(self) -> int:
        return self.bins.shape[1]


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def _check_reconstructable(window: np.ndarray, hop: int) -> None:
    """Reject window/hop pairs whose squared-window overlap sum has gaps
    (no perfect weighted-overlap-add reconstruction exists)."""
    n = len(window)
    if hop > n:
        raise ValueError(f"hop {hop} larger than window {n}: frames leave gaps")
    cover = np.zeros(3 * n)
    w2 = window ** 2
    for start in range(0, 2 * n + 1, hop):
        if start + n <= len(cover):
            cover[start:start + n] += w2
    interior = cover[n:2 * n]
    if interior.min() <= 1e-10 * max(interior.max(), 1e-30):
        raise ValueError("window/hop combination is not COLA-reconstructable")


def stft(clip_or_signal, fft_size: int, hop: int,
         window: np.ndarray | None = None,
         sample_rate: float | None = None) -> Spectrogram:
    """Frame, window, and rFFT a mono signal.  Frames lie fully inside the
    signal (no centering); the tail shorter than one frame is zero-padded so
    every sample is covered."""
    if isinstance(clip_or_signal, AudioClip):
        x = clip_or_signal.mono()
        rate = clip_or_signal.sample_rate
    else:
        x = np.asarray(clip_or_signal, dtype=np.float64)
        rate = float(sample_rate) if sample_rate else 1.0
    if window is None:
        window = hann_window(fft_size)
    if len(window) != fft_size:
        raise ValueError("window length must equal fft_size")
    if hop > fft_size:
        raise ValueError(f"hop {hop} exceeds fft_size {fft_size}")
    _check_reconstructable(window, hop)

    n = len(x)
    n_frames = max(1, -(-max(n - fft_size, 0) // hop) + 1)
    padded = np.zeros((n_frames - 1) * hop + fft_size)
    padded[:n] = x
    idx = np.arange(fft_size)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = padded[idx] * window[None, :]
    bins = np.fft.rfft(frames, axis=1).T
    return Spectrogram(bins, fft_size, hop, window, rate, n)


def istft(spec: Spectrogram) -> AudioClip:
    """Weighted overlap-add inversion, exact wherever the squared-window
    coverage is positive."""
    w = spec.window
    fft_size, hop = spec.fft_size, spec.hop
    frames = np.fft.irfft(spec.bins.T, n=fft_size, axis=1) * w[None, :]
    total = (spec.n_frames - 1) * hop + fft_size
    out = np.zeros(total)
    norm = np.zeros(total)
    for k in range(spec.n_frames):
        out[k * hop:k * hop + fft_size] += frames[k]
        norm[k * hop:k * hop + fft_size] += w ** 2
    good = norm > 1e-10 * norm.max()
    out[good] /= norm[good]
    return AudioClip(out[:spec.n_samples], spec.sample_rate)


def spectral_peak_hz(x: np.ndarray, sample_rate: float) -> float:
    """Frequency of the FFT magnitude peak, refined by parabolic
    interpolation on log magnitude.  Test oracle helper."""
    x = np.asarray(x, dtype=np.float64)
    w = hann_window(len(x))
    mag = np.abs(np.fft.rfft(x * w))
    k = int(np.argmax(mag))
    if 0 < k < len(mag) - 1 and mag[k] > 0:
        la, lb, lc = np.log(np.maximum(mag[k - 1:k + 2], 1e-300))
        denom = la - 2 * lb + lc
        delta = 0.5 * (la - lc) / denom if denom != 0 else 0.0
        delta = float(np.clip(delta, -0.5, 0.5))
    else:
        delta = 0.0
    return (k + delta) * sample_rate / len(x)


def band_energy_ratio(x: np.ndarray, sample_rate: float,
                      lo_hz: float, hi_hz: float) -> float:
    """Fraction of total spectral energy inside [lo_hz, hi_hz].  Oracle."""
    spec = np.abs(np.fft.rfft(np.asarray(x, dtype=np.float64))) ** 2
    freqs = np.fft.rfftfreq(len(x), 1.0 / sample_rate)
    total = spec.sum()
    if total == 0:
        return 0.0
    return float(spec[(freqs >= lo_hz) & (freqs <= hi_hz)].sum() / total)
