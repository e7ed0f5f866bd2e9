"""Filter, resampler, downconverter, and STFT behaviour.

Filter oracles are analytic Butterworth facts: |H| = 1/sqrt(2) at the cutoff
and the high-order asymptote of -6.02*order dB/octave.  The implementation
under test realises filters as SOS sections; the oracle route recomputes
magnitudes from scipy.signal.sosfreqz on the same spec, plus direct
sine-in/sine-out measurements, so design and application are checked
separately.
"""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import sosfreqz

from windlab.audio import AudioClip
from windlab.dsp import (FilterSpec, apply_filter, band_energy_ratio,
                         butterworth_gain_db, hann_window, highpass, istft,
                         lowpass, quadrature_downconvert, resample,
                         spectral_peak_hz, stft)

RATE = 16000.0


def _sine(freq: float, seconds: float = 2.0, rate: float = RATE) -> AudioClip:
    t = np.arange(int(seconds * rate)) / rate
    return AudioClip(np.sin(2 * np.pi * freq * t), rate)


def _rms_db(x: np.ndarray) -> float:
    return 10 * np.log10(np.mean(x**2) + 1e-300)


def _steady(clip: AudioClip) -> np.ndarray:
    """Middle half of the signal: transients trimmed."""
    n = clip.n_samples
    return clip.samples[0, n // 4: 3 * n // 4]


# ---------------------------------------------------------------------------
# Butterworth design and application
# ---------------------------------------------------------------------------

def test_cutoff_gain_is_minus_3db():
    # scipy pre-warps the cutoff, so design and analytic formula agree there
    for spec in (lowpass(1000.0, order=4, zero_phase=False),
                 highpass(1000.0, order=4, zero_phase=False)):
        _, h = sosfreqz(spec.sos(RATE), worN=[2 * np.pi * 1000.0 / RATE])
        half_power = 20 * np.log10(1 / np.sqrt(2))
        assert 20 * np.log10(np.abs(h[0])) == pytest.approx(half_power, abs=0.01)
        assert butterworth_gain_db(spec, 1000.0) == pytest.approx(half_power, abs=0.01)


def test_zero_phase_gain_is_single_pass_squared():
    single = lowpass(1000.0, order=4, zero_phase=False)
    double = lowpass(1000.0, order=4, zero_phase=True)
    for freq in (250.0, 1000.0, 3000.0):
        assert butterworth_gain_db(double, freq) == pytest.approx(
            2 * butterworth_gain_db(single, freq), rel=1e-12)


def test_gain_matches_sosfreqz_far_from_nyquist():
    # bilinear warping vanishes for f << fs; there the analytic magnitude and
    # the digital design coincide
    spec = lowpass(1200.0, order=6, zero_phase=False)
    fs = 1_000_000.0
    for freq in (100.0, 600.0, 1200.0, 2400.0, 4800.0):
        _, h = sosfreqz(spec.sos(fs), worN=[2 * np.pi * freq / fs])
        expected = 20 * np.log10(np.abs(h[0]))
        assert butterworth_gain_db(spec, freq) == pytest.approx(expected, abs=0.01)


def test_lowpass_octave_asymptote():
    # an octave above cutoff, order n: attenuation approaches 6.02*n dB/oct
    spec = lowpass(500.0, order=8, zero_phase=False)
    g1 = butterworth_gain_db(spec, 2000.0)
    g2 = butterworth_gain_db(spec, 4000.0)
    assert g1 - g2 == pytest.approx(6.02 * 8, abs=1.5)


def test_applied_attenuation_matches_design_single_pass():
    # sine-in/sine-out measurement vs the frequency response of the same SOS
    spec = lowpass(1000.0, order=4, zero_phase=False)
    tone = _sine(3000.0)
    out = apply_filter(spec, tone)
    measured = _rms_db(_steady(out)) - _rms_db(_steady(tone))
    _, h = sosfreqz(spec.sos(RATE), worN=[2 * np.pi * 3000.0 / RATE])
    assert measured == pytest.approx(20 * np.log10(np.abs(h[0])), abs=0.5)


def test_zero_phase_doubles_attenuation_and_keeps_phase():
    tone = _sine(2000.0)
    once = apply_filter(lowpass(1000.0, order=4, zero_phase=False), tone)
    twice = apply_filter(lowpass(1000.0, order=4, zero_phase=True), tone)
    att_once = _rms_db(_steady(once)) - _rms_db(_steady(tone))
    att_twice = _rms_db(_steady(twice)) - _rms_db(_steady(tone))
    assert att_twice == pytest.approx(2 * att_once, abs=1.0)
    # zero-phase: passband tone comes back aligned with the input
    passband = _sine(100.0)
    aligned = apply_filter(lowpass(1000.0, order=4, zero_phase=True), passband)
    corr = np.dot(_steady(aligned), _steady(passband))
    corr /= np.linalg.norm(_steady(aligned)) * np.linalg.norm(_steady(passband))
    assert corr > 0.9999


def test_apply_filter_preserves_rate_length_channels(rng):
    clip = AudioClip(rng.normal(size=(3, 5000)), RATE)
    out = apply_filter(highpass(20.0), clip)
    assert out.sample_rate == RATE
    assert out.samples.shape == (3, 5000)


def test_filterspec_validation():
    with pytest.raises(ValueError):
        FilterSpec(kind="bandpass", cutoff_hz=100.0, order=4, zero_phase=True)
    with pytest.raises(ValueError):
        lowpass(-5.0)
    with pytest.raises(ValueError):
        lowpass(100.0, order=0)
    with pytest.raises(ValueError):
        lowpass(9000.0).sos(RATE)  # cutoff above Nyquist


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------

def test_resample_length_round_rule(rng):
    clip = AudioClip(rng.normal(size=44100 * 2 + 37), 44100.0)
    out = resample(clip, 16000.0)
    assert out.sample_rate == 16000.0
    assert out.n_samples == int(round(clip.n_samples * 16000.0 / 44100.0))


def test_resample_preserves_tone_frequency():
    tone = _sine(440.0, seconds=2.0, rate=44100.0)
    out = resample(tone, 16000.0)
    peak = spectral_peak_hz(_steady(out), 16000.0)
    assert peak == pytest.approx(440.0, abs=1.0)


def test_resample_identity_rate(rng):
    clip = AudioClip(rng.normal(size=1000), RATE)
    out = resample(clip, RATE)
    np.testing.assert_array_equal(out.samples, clip.samples)


def test_resample_passband_amplitude_preserved():
    tone = _sine(1000.0, seconds=2.0, rate=44100.0)
    out = resample(tone, 16000.0)
    ratio = _rms_db(_steady(out)) - _rms_db(_steady(tone))
    assert abs(ratio) < 0.1


# ---------------------------------------------------------------------------
# Quadrature downconversion
# ---------------------------------------------------------------------------

def _baseband_peak_hz(iq: AudioClip) -> float:
    # I - jQ is the analytic downmix x * exp(-j*2*pi*fc*t): a tone at
    # center + delta produces a line at +delta
    z = iq.samples[0] - 1j * iq.samples[1]
    z = z[z.size // 4: 3 * z.size // 4]
    freqs = np.fft.fftfreq(z.size, 1 / iq.sample_rate)
    return float(freqs[np.argmax(np.abs(np.fft.fft(z * np.hanning(z.size))))])


def test_downconvert_shifts_offset_to_baseband():
    # tone 180 Hz above the 20 kHz centre -> complex baseband at +180 Hz
    tone = _sine(20180.0, seconds=2.0, rate=44100.0)
    iq = quadrature_downconvert(tone, 20000.0, 500.0)
    assert iq.channel_count == 2
    assert iq.sample_rate == 44100.0
    assert _baseband_peak_hz(iq) == pytest.approx(180.0, abs=1.0)


def test_downconvert_sign_of_offset_is_preserved():
    tone = _sine(20000.0 - 150.0, seconds=2.0, rate=44100.0)
    iq = quadrature_downconvert(tone, 20000.0, 500.0)
    assert _baseband_peak_hz(iq) == pytest.approx(-150.0, abs=1.0)


def test_downconvert_rejects_distant_tone():
    # 2 kHz away with a 500 Hz lowpass: essentially nothing comes through
    tone = _sine(22000.0, seconds=2.0, rate=44100.0)
    iq = quadrature_downconvert(tone, 20000.0, 500.0)
    z = _steady(iq)
    assert _rms_db(z) < _rms_db(_steady(tone)) - 60.0


def test_downconvert_requires_mono_and_headroom():
    stereo = AudioClip(np.zeros((2, 1000)), 44100.0)
    with pytest.raises(ValueError):
        quadrature_downconvert(stereo, 20000.0, 500.0)
    mono = AudioClip(np.zeros(1000), 44100.0)
    with pytest.raises(ValueError):
        quadrature_downconvert(mono, 21800.0, 500.0)  # center + cutoff >= Nyquist


# ---------------------------------------------------------------------------
# STFT / ISTFT
# ---------------------------------------------------------------------------

def test_stft_istft_roundtrip_interior(rng):
    x = rng.normal(size=4096)
    spec = stft(AudioClip(x, RATE), fft_size=512, hop=128)
    back = istft(spec).samples[0]
    m = min(back.size, x.size)
    np.testing.assert_allclose(back[512:m - 512], x[512:m - 512], atol=1e-10)


@settings(max_examples=15, deadline=None)
@given(n=st.integers(min_value=2048, max_value=6000),
       seed=st.integers(min_value=0, max_value=10_000))
def test_stft_roundtrip_property(n, seed):
    x = np.random.default_rng(seed).normal(size=n)
    spec = stft(AudioClip(x, RATE), fft_size=256, hop=64)
    back = istft(spec).samples[0]
    m = min(back.size, n)
    np.testing.assert_allclose(back[256:m - 256], x[256:m - 256], atol=1e-10)


def test_stft_rejects_gapped_window_hop_pairs():
    x = np.random.default_rng(0).normal(size=2048)
    # hann without overlap: the window endpoint is zero, so coverage has gaps
    with pytest.raises(ValueError, match="COLA"):
        stft(x, 512, 512)
    # rectangular without overlap reconstructs fine
    back = istft(stft(x, 512, 512, window=np.ones(512), sample_rate=RATE))
    np.testing.assert_allclose(back.samples[0], x, atol=1e-10)
    with pytest.raises(ValueError, match="window length"):
        stft(x, 512, 128, window=np.ones(256))
    with pytest.raises(ValueError, match="hop"):
        stft(x, 512, 513)


def test_spectral_peak_parabolic_precision():
    # an off-bin tone: parabolic interpolation should land within 0.5 Hz
    peak = spectral_peak_hz(_sine(1234.3, seconds=1.0).samples[0], RATE)
    assert peak == pytest.approx(1234.3, abs=0.5)


def test_hann_window_cola():
    w = hann_window(512)
    assert w.size == 512
    # periodic hann at hop = N/4 sums to a constant
    acc = np.zeros(512 * 3)
    for k in range(0, acc.size - 512, 128):
        acc[k:k + 512] += w
    mid = acc[512:-512]
    np.testing.assert_allclose(mid, mid[0])


def test_band_energy_ratio_lowpassed_noise(rng):
    clip = AudioClip(rng.normal(size=32768), RATE)
    low = apply_filter(lowpass(1000.0, order=8), clip)
    ratio = band_energy_ratio(low.samples[0], RATE, 0.0, 1000.0)
    assert ratio > 0.98
