"""Wind model, turbulence noise, and Doppler tone synthesis.

The OU oracles are closed-form: stationary std sigma = vol/sqrt(2*theta),
one-step autocorrelation exp(-theta*dt), and exact-discretisation moments.
Statistics are checked on long fixed-seed draws with tolerances derived from
the estimator variance, so they are deterministic, not flaky.
"""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from windlab.airflow import (CaptureScene, capture_components,
                             gen_wind_profile, stationary_std, synth_capture,
                             synth_ultrasound_tone, synth_wind_noise)
from windlab.dsp import band_energy_ratio, spectral_peak_hz

RATE = 44100.0


def test_stationary_std_closed_form():
    assert stationary_std(0.8, 1.2) == pytest.approx(1.2 / np.sqrt(1.6))
    assert stationary_std(2.0, 0.0) == 0.0


def test_zero_volatility_profile_is_constant():
    wind = gen_wind_profile(4.0, mean_speed=3.43, reversion_rate=0.8,
                            volatility=0.0, seed=0)
    np.testing.assert_array_equal(wind.speeds, 3.43)


def test_profile_matches_stationary_moments():
    # one long draw; sample mean converges at sigma/sqrt(n_eff)
    wind = gen_wind_profile(2000.0, mean_speed=3.0, reversion_rate=0.8,
                            volatility=1.2, seed=42)
    sigma = stationary_std(0.8, 1.2)
    n_eff = 2000.0 * 0.8  # ~ duration / correlation time
    assert np.mean(wind.speeds) == pytest.approx(3.0, abs=5 * sigma / np.sqrt(n_eff))
    assert np.std(wind.speeds) == pytest.approx(sigma, rel=0.05)


def test_profile_lag1_autocorrelation():
    wind = gen_wind_profile(2000.0, mean_speed=3.0, reversion_rate=0.8,
                            volatility=1.2, seed=7)
    v = wind.speeds - np.mean(wind.speeds)
    rho = np.dot(v[:-1], v[1:]) / np.dot(v, v)
    expected = np.exp(-0.8 / wind.control_rate)
    assert rho == pytest.approx(expected, abs=0.005)


def test_exact_discretisation_step_law():
    # conditional law: v[k] | v[k-1] ~ N(mu + (v-mu)*e^{-theta dt}, sigma_step)
    wind = gen_wind_profile(5000.0, mean_speed=3.0, reversion_rate=0.8,
                            volatility=1.0, seed=11)
    dt = 1.0 / wind.control_rate
    decay = np.exp(-0.8 * dt)
    resid = wind.speeds[1:] - (3.0 + (wind.speeds[:-1] - 3.0) * decay)
    sigma = stationary_std(0.8, 1.0)
    step_std = sigma * np.sqrt(1 - decay**2)
    assert np.std(resid) == pytest.approx(step_std, rel=0.02)
    assert abs(np.mean(resid)) < 5 * step_std / np.sqrt(resid.size)


def test_rejects_parameters_reaching_speed_ceiling():
    # sigma_st = 1.2/sqrt(1.6) ~ 0.9487; mean 4.3 + 4*sigma > 8 -> invalid
    with pytest.raises(ValueError, match="8"):
        gen_wind_profile(1.0, mean_speed=4.3, reversion_rate=0.8,
                         volatility=1.2, seed=0)
    # mean 4.2 stays legal
    gen_wind_profile(1.0, mean_speed=4.2, reversion_rate=0.8,
                     volatility=1.2, seed=0)


def test_gen_wind_profile_validation():
    with pytest.raises(ValueError):
        gen_wind_profile(0.0, 3.0, 0.8, 1.2, seed=0)
    with pytest.raises(ValueError):
        gen_wind_profile(1.0, 3.0, -0.5, 1.2, seed=0)
    with pytest.raises(ValueError):
        gen_wind_profile(1.0, 3.0, 0.8, -0.1, seed=0)


def test_profile_determinism():
    a = gen_wind_profile(10.0, 3.0, 0.8, 1.2, seed=5)
    b = gen_wind_profile(10.0, 3.0, 0.8, 1.2, seed=5)
    np.testing.assert_array_equal(a.speeds, b.speeds)
    c = gen_wind_profile(10.0, 3.0, 0.8, 1.2, seed=6)
    assert not np.array_equal(a.speeds, c.speeds)


def test_at_rate_interpolates_control_points():
    wind = gen_wind_profile(2.0, 3.0, 0.8, 1.2, seed=1)
    # sampling exactly at the control grid returns the control values
    audio = wind.at_rate(wind.control_rate, len(wind.speeds))
    np.testing.assert_allclose(audio, wind.speeds, atol=1e-9)


def test_at_rate_refuses_extrapolation():
    wind = gen_wind_profile(1.0, 3.0, 0.8, 1.2, seed=1)
    with pytest.raises(ValueError, match="profile covers"):
        wind.at_rate(44100.0, int(2.0 * 44100))


# ---------------------------------------------------------------------------
# Turbulence noise
# ---------------------------------------------------------------------------

def _const_wind(speed: float, seconds: float = 4.0):
    return gen_wind_profile(seconds, speed, 0.8, 0.0, seed=0)


def test_wind_noise_is_lowpassed():
    noise = synth_wind_noise(_const_wind(3.0), 4.0, seed=2)
    ratio = band_energy_ratio(noise.samples[0], RATE, 0.0, 1000.0)
    assert ratio > 0.99


def test_wind_noise_energy_scales_v4():
    # amplitude envelope (v/v_ref)^2 -> energy ratio (v1/v2)^4
    n2 = synth_wind_noise(_const_wind(2.0), 4.0, seed=3)
    n4 = synth_wind_noise(_const_wind(4.0), 4.0, seed=3)
    ratio = np.sum(n4.samples**2) / np.sum(n2.samples**2)
    assert ratio == pytest.approx((4.0 / 2.0) ** 4, rel=1e-6)


def test_wind_noise_zero_wind_is_silence():
    noise = synth_wind_noise(_const_wind(0.0), 2.0, seed=4)
    np.testing.assert_array_equal(noise.samples, 0.0)


def test_wind_noise_spectral_tilt():
    # -3 dB/octave on the pre-filter shaping: energy density halves per
    # octave, so equal-log-width bands well below the 1 kHz LPF should show
    # ~3 dB/octave decay.  Use a strong-wind constant profile for SNR.
    noise = synth_wind_noise(_const_wind(2.0, seconds=30.0), 30.0, seed=5, gain=1.0)
    x = noise.samples[0]
    psd = np.abs(np.fft.rfft(x)) ** 2
    freqs = np.fft.rfftfreq(x.size, 1 / RATE)

    def band_db(lo, hi):
        sel = (freqs >= lo) & (freqs < hi)
        return 10 * np.log10(np.mean(psd[sel]))

    d1 = band_db(50, 100) - band_db(100, 200)
    d2 = band_db(100, 200) - band_db(200, 400)
    assert d1 == pytest.approx(3.0, abs=0.8)
    assert d2 == pytest.approx(3.0, abs=0.8)


def test_wind_noise_determinism():
    a = synth_wind_noise(_const_wind(3.0), 2.0, seed=9)
    b = synth_wind_noise(_const_wind(3.0), 2.0, seed=9)
    np.testing.assert_array_equal(a.samples, b.samples)


# ---------------------------------------------------------------------------
# Doppler tones
# ---------------------------------------------------------------------------

def test_tone_zero_wind_sits_at_carrier():
    tone = synth_ultrasound_tone(_const_wind(0.0), 4.0, 20000.0, 0.25)
    assert spectral_peak_hz(tone.samples[0], RATE) == pytest.approx(20000.0, abs=0.5)


@settings(max_examples=8, deadline=None)
@given(speed=st.floats(min_value=0.5, max_value=7.5),
       carrier=st.sampled_from([20000.0, 21000.0]))
def test_tone_doppler_law(speed, carrier):
    # f = fc * (1 + v/c): the whole law, not just the two paper points
    tone = synth_ultrasound_tone(_const_wind(speed), 4.0, carrier, 0.25,
                                 speed_of_sound=343.0)
    expected = carrier * (1.0 + speed / 343.0)
    assert spectral_peak_hz(tone.samples[0], RATE) == pytest.approx(expected, abs=1.0)


def test_tone_has_constant_amplitude():
    tone = synth_ultrasound_tone(_const_wind(3.0), 2.0, 20000.0, 0.25)
    assert np.max(np.abs(tone.samples)) == pytest.approx(0.25, abs=1e-3)


def test_tone_rejects_near_nyquist_carrier():
    with pytest.raises(ValueError):
        synth_ultrasound_tone(_const_wind(1.0), 1.0, 21800.0, 0.25)


# ---------------------------------------------------------------------------
# Capture assembly
# ---------------------------------------------------------------------------

def test_capture_is_sum_of_components():
    wind = gen_wind_profile(3.0, 3.0, 0.8, 1.2, seed=21)
    scene = CaptureScene(duration_seconds=3.0, wind=wind, noise_gain=0.1,
                         carriers=((20000.0, 0.05), (21000.0, 0.05)),
                         static_reflection=0.05)
    parts = capture_components(scene)
    assert set(parts) == {"noise", "tone_20000", "tone_21000",
                          "static_20000", "static_21000"}
    total = sum(parts.values())
    capture = synth_capture(scene)
    if np.max(np.abs(total)) <= scene.normalize_peak:
        np.testing.assert_array_equal(capture.samples[0], total)
    else:
        ratio = capture.samples[0] / total
        np.testing.assert_allclose(ratio, ratio[0])


def test_capture_normalization_caps_peak():
    wind = gen_wind_profile(3.0, 4.0, 0.8, 0.0, seed=0)
    scene = CaptureScene(duration_seconds=3.0, wind=wind, noise_gain=5.0)
    capture = synth_capture(scene)
    assert np.max(np.abs(capture.samples)) <= scene.normalize_peak + 1e-12


def test_capture_static_reflection_off():
    wind = gen_wind_profile(2.0, 3.0, 0.8, 0.0, seed=0)
    scene = CaptureScene(duration_seconds=2.0, wind=wind, static_reflection=0.0)
    parts = capture_components(scene)
    assert not any(k.startswith("static") for k in parts)


def test_scene_validation():
    wind = gen_wind_profile(2.0, 3.0, 0.8, 0.0, seed=0)
    with pytest.raises(ValueError):
        CaptureScene(duration_seconds=2.0, wind=wind,
                     carriers=((21900.0, 0.25),))
    with pytest.raises(ValueError, match="shorter"):
        CaptureScene(duration_seconds=5.0, wind=wind)
