"""Metric and evaluation-harness tests.

SI-SDR is pinned by closed-form cases (orthogonal noise at a constructed
SNR, scale invariance at 1e-6 dB); STOI by its defining behaviours
(self-similarity, strict degradation with added noise, scale invariance).
The evaluate() harness is checked on a real mini-dataset: a pass-through
enhancer must score each record's mixing SNR on average.
"""

from __future__ import annotations

import json

import numpy as np
import pytest

from windlab.audio import read_manifest, read_wav
from windlab.metrics import (EvalReport, EvalRow, evaluate, render_table,
                             si_sdr, stoi)
from windlab.speech import sample_speaker, synth_utterance

RATE = 16000.0


@pytest.fixture(scope="module")
def speech() -> np.ndarray:
    rng = np.random.default_rng(42)
    x = synth_utterance(sample_speaker(rng), 3.0, RATE, rng)
    return x / np.abs(x).max()


# ---------------------------------------------------------------------------
# SI-SDR
# ---------------------------------------------------------------------------

def test_si_sdr_orthogonal_noise_gives_exact_snr():
    """Reference and noise on disjoint harmonics of a common period are
    exactly orthogonal, so SI-SDR equals the construction's power ratio."""
    n = 16000
    t = np.arange(n) / RATE
    ref = np.sin(2 * np.pi * 400.0 * t)           # full periods over n
    noise = 0.1 * np.cos(2 * np.pi * 800.0 * t)   # orthogonal, power ratio 100
    value = si_sdr(ref, ref + noise)
    assert value == pytest.approx(20.0, abs=1e-9)


@pytest.mark.parametrize("alpha", [0.01, 100.0])
def test_si_sdr_scale_invariance(alpha, speech):
    rng = np.random.default_rng(7)
    est = speech + 0.3 * rng.normal(size=speech.shape)
    base = si_sdr(speech, est)
    assert si_sdr(speech, alpha * est) == pytest.approx(base, abs=1e-6)


def test_si_sdr_perfect_estimate_hits_cap(speech):
    assert si_sdr(speech, speech) == 100.0
    assert si_sdr(speech, 3.7 * speech) == 100.0


def test_si_sdr_silent_estimate_scores_floor(speech):
    assert si_sdr(speech, np.zeros_like(speech)) == -100.0


def test_si_sdr_validation(speech):
    with pytest.raises(ValueError, match="silent"):
        si_sdr(np.zeros(100), np.ones(100))
    with pytest.raises(ValueError, match="length mismatch"):
        si_sdr(speech, speech[:-1])


def test_si_sdr_noise_only_estimate_is_strongly_negative(speech):
    rng = np.random.default_rng(8)
    assert si_sdr(speech, rng.normal(size=speech.shape)) < -10.0


# ---------------------------------------------------------------------------
# STOI
# ---------------------------------------------------------------------------

def test_stoi_self_similarity(speech):
    assert stoi(speech, speech, RATE) >= 0.999


def test_stoi_strictly_decreasing_with_noise(speech):
    rng = np.random.default_rng(9)
    noise = rng.normal(size=speech.shape)
    noise /= np.sqrt(np.mean(noise**2))
    p_speech = float(np.mean(speech**2))
    scores = []
    for snr_db in (0.0, -10.0, -20.0):
        scaled = noise * np.sqrt(p_speech / 10.0 ** (snr_db / 10.0))
        scores.append(stoi(speech, speech + scaled, RATE))
    assert scores[0] > scores[1] > scores[2]
    assert scores[0] < 0.999  # noise at 0 dB must already cost something


def test_stoi_invariant_to_estimate_scale(speech):
    rng = np.random.default_rng(10)
    est = speech + 0.5 * rng.normal(size=speech.shape)
    base = stoi(speech, est, RATE)
    assert stoi(speech, 20.0 * est, RATE) == pytest.approx(base, abs=1e-12)


def test_stoi_validation(speech):
    with pytest.raises(ValueError, match="length mismatch"):
        stoi(speech, speech[:-1], RATE)
    with pytest.raises(ValueError, match="too few active frames"):
        stoi(speech[:1600], speech[:1600], RATE)


# ---------------------------------------------------------------------------
# manifest evaluation harness
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def moderate_manifest(tmp_path_factory, extracted_captures, clean_corpus_dir):
    """Same captures/speech as the shared mini dataset, re-mixed at moderate
    SNR where SI-SDR(clean, noisy) ≈ mixing SNR holds per record."""
    from windlab.dataset import MixSettings, build_dataset
    cleans = {p.stem: read_wav(p) for p in sorted(clean_corpus_dir.glob("*.wav"))}
    out = tmp_path_factory.mktemp("moderate")
    return build_dataset(extracted_captures, cleans, out,
                         MixSettings(snr_range_db=(-10.0, 0.0),
                                     window_seconds=5.0, hop_seconds=2.0,
                                     train_fraction=0.7, seed=6))


def test_pass_through_scores_the_mixing_snr(moderate_manifest):
    """SI-SDR of the raw mixture against the clean reference equals the
    record's mixing SNR up to clean/noise cross-correlation — per record at
    moderate SNR (at very deep SNR the projection term grows as the
    clean/noise correlation stops being negligible)."""
    records = read_manifest(moderate_manifest)
    report = evaluate(records, {}, moderate_manifest.parent,
                      splits=("train", "val", "test"))
    rows = [r for r in report.rows if r.model == "unprocessed"]
    assert len(rows) == len(records)
    gaps = [r.si_sdr_db - r.snr_db for r in rows]
    assert max(abs(g) for g in gaps) < 0.5
    assert abs(float(np.mean(gaps))) < 0.5


def test_evaluate_oracle_enhancer_scores_ceiling(mini_dataset):
    records = [r for r in read_manifest(mini_dataset) if r.split == "test"][:3]
    base = mini_dataset.parent

    # evaluate() walks records in order, so an iterator-backed enhancer can
    # return each record's own clean reference
    clean_by_id = {r.id: read_wav(base / r.clean).mono() for r in records}
    order = iter([r.id for r in records])

    def oracle(noisy, features):
        return clean_by_id[next(order)]

    report = evaluate(records, {"oracle": oracle}, base, splits=("test",))
    for row in report.rows:
        if row.model == "oracle":
            assert row.si_sdr_db == 100.0
            assert row.stoi >= 0.999
        else:
            assert row.si_sdr_db < 0.0


def test_eval_report_roundtrip_and_rendering(tmp_path):
    rows = [
        EvalRow("r0", "unprocessed", "test", -25.0, -24.5, 0.40),
        EvalRow("r0", "fused", "test", -25.0, -12.0, 0.55),
        EvalRow("r1", "unprocessed", "test", -33.0, -33.2, 0.30),
        EvalRow("r1", "fused", "test", -33.0, -20.0, 0.45),
    ]
    report = EvalReport(rows)
    csv_path = tmp_path / "rows.csv"
    report.to_csv(csv_path)
    back = EvalReport.from_csv(csv_path)
    assert back.rows == rows
    assert back.aggregates() == report.aggregates()

    agg = report.aggregates()
    assert agg["fused"]["mean_si_sdr_db"] == pytest.approx(-16.0)
    assert agg["unprocessed"]["count"] == 2

    buckets = report.snr_buckets(5.0)
    assert set(buckets["fused"]) == {"[-25,-20)", "[-35,-30)"}

    table = render_table(report)
    assert "fused" in table and "unprocessed" in table
    assert "[-35,-30)" in table

    summary = tmp_path / "summary.json"
    report.write_summary(summary)
    payload = json.loads(summary.read_text())
    assert payload["aggregates"]["fused"]["mean_si_sdr_db"] == pytest.approx(-16.0)


def test_evaluate_rejects_empty_selection(mini_dataset):
    records = read_manifest(mini_dataset)
    with pytest.raises(ValueError, match="no records"):
        evaluate(records, {}, mini_dataset.parent, splits=("nope",))
