"""AudioClip container, WAV I/O, and manifest records.

WAV oracles are dual-route: files written here are re-read with
scipy.io.wavfile (an independent reader) and, for pcm16, with the stdlib
``wave`` module, so a byte-layout bug in our writer cannot hide behind a
matching bug in our reader.
"""

from __future__ import annotations

import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.io import wavfile

from windlab.audio import (AudioClip, ManifestRecord, concat, read_manifest,
                           read_wav, resample_meta_check, write_manifest,
                           write_wav)


def test_clip_shape_and_props():
    clip = AudioClip(np.zeros(100), 16000.0)
    assert clip.channel_count == 1
    assert clip.n_samples == 100
    assert clip.duration_seconds == pytest.approx(100 / 16000)
    two = AudioClip(np.zeros((2, 50)), 8000.0)
    assert two.channel_count == 2


def test_clip_is_immutable():
    clip = AudioClip(np.zeros(10), 16000.0)
    with pytest.raises(ValueError):
        clip.samples[0, 0] = 1.0


def test_clip_rejects_bad_inputs():
    with pytest.raises(ValueError):
        AudioClip(np.zeros((2, 3, 4)), 16000.0)
    with pytest.raises(ValueError):
        AudioClip(np.zeros(10), 0.0)
    with pytest.raises(ValueError):
        AudioClip(np.zeros(10), -1.0)


def test_mono_accessor_requires_single_channel():
    clip = AudioClip(np.array([1.0, 0.25]), 16000.0)
    np.testing.assert_array_equal(clip.mono(), [1.0, 0.25])
    stereo = AudioClip(np.zeros((2, 4)), 16000.0)
    with pytest.raises(ValueError, match="mono"):
        stereo.mono()


def test_slice_and_concat_roundtrip():
    x = np.arange(20, dtype=float)[None, :]
    clip = AudioClip(x, 16000.0)
    parts = [clip.slice(0, 7), clip.slice(7, 20)]
    back = concat(parts)
    np.testing.assert_array_equal(back.samples, x)


def test_concat_rejects_mixed_rates():
    a = AudioClip(np.zeros(5), 16000.0)
    b = AudioClip(np.zeros(5), 8000.0)
    with pytest.raises(ValueError):
        concat([a, b])


# ---------------------------------------------------------------------------
# WAV I/O
# ---------------------------------------------------------------------------

def test_wav_float32_roundtrip_bit_exact(tmp_path, rng):
    x = rng.normal(scale=0.3, size=(2, 777)).astype(np.float32)
    clip = AudioClip(x, 44100.0)
    path = tmp_path / "f.wav"
    write_wav(clip, path, encoding="float32")
    back = read_wav(path)
    assert back.sample_rate == 44100.0
    np.testing.assert_array_equal(back.samples.astype(np.float32), x)


def test_wav_float32_matches_scipy_reader(tmp_path, rng):
    x = rng.normal(scale=0.3, size=555).astype(np.float32)
    path = tmp_path / "f.wav"
    write_wav(AudioClip(x, 16000.0), path, encoding="float32")
    rate, data = wavfile.read(path)
    assert rate == 16000
    np.testing.assert_array_equal(data, x)


def test_wav_pcm16_matches_stdlib_wave(tmp_path, rng):
    x = np.clip(rng.normal(scale=0.3, size=400), -1, 1)
    path = tmp_path / "p.wav"
    write_wav(AudioClip(x, 8000.0), path, encoding="pcm16")
    with wave.open(str(path)) as w:
        assert w.getframerate() == 8000
        assert w.getnchannels() == 1
        assert w.getsampwidth() == 2
        raw = np.frombuffer(w.readframes(w.getnframes()), dtype="<i2")
    back = read_wav(path)
    np.testing.assert_allclose(back.samples[0], raw / 32768.0)
    assert np.max(np.abs(back.samples[0] - x)) <= 0.5 / 32768.0 + 1e-12


def test_wav_reads_scipy_written_file(tmp_path, rng):
    x = rng.normal(scale=0.1, size=300).astype(np.float32)
    path = tmp_path / "s.wav"
    wavfile.write(path, 22050, x)
    clip = read_wav(path)
    assert clip.sample_rate == 22050.0
    np.testing.assert_array_equal(clip.samples[0].astype(np.float32), x)


@settings(max_examples=20, deadline=None)
@given(n=st.integers(min_value=1, max_value=2000),
       channels=st.integers(min_value=1, max_value=4),
       seed=st.integers(min_value=0, max_value=2**31 - 1))
def test_wav_roundtrip_property(tmp_path_factory, n, channels, seed):
    x = np.random.default_rng(seed).normal(scale=0.2, size=(channels, n))
    x = x.astype(np.float32)
    path = tmp_path_factory.mktemp("wav") / "x.wav"
    write_wav(AudioClip(x, 16000.0), path)
    back = read_wav(path)
    np.testing.assert_array_equal(back.samples.astype(np.float32), x)


def test_write_wav_rejects_unknown_encoding(tmp_path):
    with pytest.raises(ValueError):
        write_wav(AudioClip(np.zeros(4), 16000.0), tmp_path / "x.wav",
                  encoding="mp3")


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------

def _record(i: int = 0, split: str = "train", capture: str = "cap000",
            utterance: str = "speaker000:0") -> ManifestRecord:
    return ManifestRecord(id=f"r{i:04d}",
                          noisy=f"records/r{i:04d}.noisy.wav",
                          features=f"records/r{i:04d}.stack.wav",
                          clean=f"records/r{i:04d}.clean.wav",
                          snr_db=-25.5, split=split, seed=i,
                          utterance_id=utterance, capture_id=capture)


def test_manifest_json_roundtrip():
    rec = _record()
    back = ManifestRecord.from_json(rec.to_json())
    assert back == rec


def test_manifest_file_roundtrip(tmp_path):
    records = [_record(i, split) for i, split in
               enumerate(["train", "val", "test"])]
    path = tmp_path / "manifest.jsonl"
    write_manifest(records, path)
    assert read_manifest(path) == records


def test_manifest_read_rejects_garbage(tmp_path):
    path = tmp_path / "manifest.jsonl"
    path.write_text('{"id": "r0"\n')
    with pytest.raises(ValueError, match="unreadable"):
        read_manifest(path)


def test_meta_check_flags_capture_leakage():
    records = [_record(0, "train", capture="capA"),
               _record(1, "val", capture="capA", utterance="speaker001:0")]
    report = resample_meta_check(records, check_files=False)
    assert not report.ok
    assert report.leakage and "capture_id capA" in report.leakage[0]


def test_meta_check_allows_val_test_sharing():
    records = [_record(0, "train", capture="capA", utterance="sp0:0"),
               _record(1, "val", capture="capB", utterance="sp1:0"),
               _record(2, "test", capture="capB", utterance="sp1:0")]
    report = resample_meta_check(records, check_files=False)
    assert report.ok, report.summary()


def test_meta_check_flags_duplicates_and_snr():
    records = [_record(0), _record(0)]
    report = resample_meta_check(records, snr_range=(-30.0, -26.0),
                                 check_files=False)
    assert report.duplicate_ids == ["r0000"]
    assert len(report.snr_violations) == 2
    assert "snr_violations" in report.summary()
