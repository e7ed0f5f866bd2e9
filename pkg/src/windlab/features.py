"""Feature extraction from raw captures.

Two parallel cascades over the 44.1 kHz microphone signal:

* audible noise band — lowpass 1.2 kHz, highpass 20 Hz, resample to 16 kHz;
* ultrasound basebands — quadrature downconversion at each carrier,
  500 Hz lowpass on the I/Q products, 10 Hz highpass to strip the static
  carrier residue, resample to 16 kHz.

Both paths share the zero-phase filter bank from :mod:`windlab.dsp`, so the
two outputs stay sample-synchronous with the input timeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .airflow import CAPTURE_RATE
from .audio import AudioClip
from .dsp import apply_filter, highpass, lowpass, quadrature_downconvert, resample

__all__ = [
    "FEATURE_MODES", "FeatureConfig", "BasebandFeatureStack",
    "extract_noise_band", "extract_ultrasound_baseband", "extract_feature_stack",
]

FEATURE_MODES = ("dual", "single_20k", "single_21k")


@dataclass(frozen=True)
class FeatureConfig:
    """Cutoffs and carriers for the extraction cascade."""

    carriers: tuple[float, float] = (20000.0, 21000.0)
    noise_lowpass_hz: float = 1200.0
    noise_highpass_hz: float = 20.0
    baseband_lowpass_hz: float = 500.0
    baseband_highpass_hz: float = 10.0
    target_rate: float = 16000.0
    capture_rate: float = CAPTURE_RATE

    def mode_carriers(self, mode: str) -> tuple[float, ...]:
        if mode == "dual":
            return self.carriers
        if mode == "single_20k":
            return (self.carriers[0],)
        if mode == "single_21k":
            return (self.carriers[1],)
        raise ValueError(f"unknown feature mode {mode!r}; expected one of {FEATURE_MODES}")


@dataclass(frozen=True)
class BasebandFeatureStack:
    """I/Q basebands for one capture, stacked channelwise at 16 kHz.

    Channel order is [I, Q] per carrier, carriers in ascending-config
    order: dual mode gives [I_20k, Q_20k, I_21k, Q_21k].
    """

    clip: AudioClip
    mode: str
    carriers: tuple[float, ...]
    capture_id: str = ""

    def __post_init__(self):
        if self.clip.channel_count != 2 * len(self.carriers):
            raise ValueError(
                f"stack with {len(self.carriers)} carriers needs "
                f"{2 * len(self.carriers)} channels, got {self.clip.channel_count}")


def _check_capture(capture: AudioClip, cfg: FeatureConfig):
    if capture.channel_count != 1:
        raise ValueError(f"expected a mono capture, got {capture.channel_count} channels")
    if capture.sample_rate != cfg.capture_rate:
        raise ValueError(
            f"expected a {cfg.capture_rate:g} Hz capture, got {capture.sample_rate:g} Hz")


def extract_noise_band(capture: AudioClip,
                       cfg: FeatureConfig = FeatureConfig()) -> AudioClip:
    """Audible wind-noise band at the target rate (mono)."""
    _check_capture(capture, cfg)
    x = apply_filter(lowpass(cfg.noise_lowpass_hz), capture)
    x = apply_filter(highpass(cfg.noise_highpass_hz), x)
    return resample(x, cfg.target_rate)


def extract_ultrasound_baseband(capture: AudioClip, center_hz: float,
                                cfg: FeatureConfig = FeatureConfig(),
                                highpass_hz: float | None = None) -> AudioClip:
    """I/Q baseband of one carrier at the target rate (2 channels).

    ``highpass_hz`` overrides the static-rejection corner; 0 disables the
    highpass entirely (useful for measuring how much carrier residue the
    default corner removes).
    """
    _check_capture(capture, cfg)
    hp = cfg.baseband_highpass_hz if highpass_hz is None else highpass_hz
    iq = quadrature_downconvert(capture, center_hz, cfg.baseband_lowpass_hz)
    if hp > 0:
        iq = apply_filter(highpass(hp), iq)
    return resample(iq, cfg.target_rate)


def extract_feature_stack(capture: AudioClip, mode: str = "dual",
                          cfg: FeatureConfig = FeatureConfig(),
                          capture_id: str = "") -> tuple[AudioClip, BasebandFeatureStack]:
    """Run both cascades; returns (noise band, baseband stack).

    Each carrier is extracted independently, so the first two channels of a
    dual stack are bit-identical to the corresponding single-carrier stack.
    """
    carriers = cfg.mode_carriers(mode)
    noise = extract_noise_band(capture, cfg)
    channels = [extract_ultrasound_baseband(capture, hz, cfg).samples
                for hz in carriers]
    stack_clip = AudioClip(np.concatenate(channels, axis=0), cfg.target_rate)
    stack = BasebandFeatureStack(clip=stack_clip, mode=mode,
                                 carriers=carriers, capture_id=capture_id)
    return noise, stack
