"""Shared fixtures.

The expensive fixtures (simulated captures, extracted features, a mixed
mini-dataset) are session-scoped: they are deterministic functions of the
seeds pinned here, so sharing them across test modules changes nothing
except wall-clock time.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from windlab.airflow import CaptureScene, gen_wind_profile, synth_capture
from windlab.dataset import ExtractedCapture, MixSettings, build_dataset
from windlab.features import FeatureConfig, extract_feature_stack
from windlab.speech import synth_clean_corpus


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def feature_config() -> FeatureConfig:
    return FeatureConfig()


@pytest.fixture(scope="session")
def capture_const_wind(feature_config):
    """A 6 s capture at constant wind speed 3.43 m/s (Doppler = fc/100)."""
    wind = gen_wind_profile(duration_seconds=6.0, mean_speed=3.43,
                            reversion_rate=0.8, volatility=0.0, seed=3)
    scene = CaptureScene(duration_seconds=6.0, wind=wind)
    return synth_capture(scene)


@pytest.fixture(scope="session")
def extracted_captures(tmp_path_factory, feature_config) -> list[ExtractedCapture]:
    """Three 16 s turbulent captures run through the feature cascade."""
    captures = []
    for i in range(3):
        wind = gen_wind_profile(duration_seconds=16.0, mean_speed=3.0,
                                reversion_rate=0.8, volatility=1.2, seed=100 + i)
        scene = CaptureScene(duration_seconds=16.0, wind=wind)
        capture = synth_capture(scene)
        noise, stack = extract_feature_stack(capture, mode="dual",
                                             cfg=feature_config,
                                             capture_id=f"cap{i:03d}")
        captures.append(ExtractedCapture(capture_id=f"cap{i:03d}", seed=100 + i,
                                         noise=noise, stack=stack.clip))
    return captures


@pytest.fixture(scope="session")
def clean_corpus_dir(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("clean")
    synth_clean_corpus(out, n_speakers=3, utterances_per_speaker=2,
                       utterance_seconds=5.0, seed=17)
    return out


def load_clean_files(clean_dir: Path) -> dict:
    from windlab.audio import read_wav
    return {p.stem: read_wav(p) for p in sorted(clean_dir.glob("*.wav"))}


@pytest.fixture(scope="session")
def mini_dataset(tmp_path_factory, extracted_captures, clean_corpus_dir) -> Path:
    """A small mixed dataset; returns the manifest path."""
    out = tmp_path_factory.mktemp("dataset")
    settings = MixSettings(snr_range_db=(-40.0, -20.0), window_seconds=5.0,
                           hop_seconds=2.0, train_fraction=0.7, seed=5)
    manifest = build_dataset(extracted_captures, load_clean_files(clean_corpus_dir),
                             out, settings)
    return manifest
