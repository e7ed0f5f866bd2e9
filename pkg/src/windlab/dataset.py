"""Dataset synthesis: segmentation, SNR-controlled mixing, split discipline.

Segments from extracted captures are paired with clean-speech utterances at
target SNRs drawn uniformly from a configured range.  Splitting happens at
the *source* level (whole captures, whole speaker files) so no turbulence
realisation or voice is shared between train and the held-out splits.  The
test split deliberately reuses validation material re-paired under freshly
drawn SNRs, which exercises the leakage rules without burning a third of
the simulated material.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import (AudioClip, ManifestRecord, read_wav, resample_meta_check,
                    write_manifest, write_wav)

__all__ = [
    "MixSettings", "ExtractedCapture", "segment", "mix_at_snr", "build_dataset",
]


@dataclass(frozen=True)
class MixSettings:
    """Knobs for :func:`build_dataset`."""

    snr_range_db: tuple[float, float] = (-40.0, -20.0)
    window_seconds: float = 5.0
    hop_seconds: float = 2.0
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.snr_range_db
        if not lo <= hi:
            raise ValueError(f"snr range reversed: [{lo}, {hi}]")
        if self.window_seconds <= 0 or self.hop_seconds <= 0:
            raise ValueError("window and hop must be positive")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")


@dataclass(frozen=True)
class ExtractedCapture:
    """Feature-extraction output for one capture, at the feature rate."""

    capture_id: str
    seed: int
    noise: AudioClip   # mono
    stack: AudioClip   # 2 or 4 channels, same rate and length as noise

    def __post_init__(self):
        if self.noise.channel_count != 1:
            raise ValueError("noise band must be mono")
        if self.noise.sample_rate != self.stack.sample_rate:
            raise ValueError("noise and stack rates differ")
        if self.noise.n_samples != self.stack.n_samples:
            raise ValueError("noise and stack lengths differ")


def segment(clip: AudioClip, window_seconds: float, hop_seconds: float) -> list[AudioClip]:
    """Sliding windows fully inside the clip; shorter clips yield none."""
    win = int(round(window_seconds * clip.sample_rate))
    hop = int(round(hop_seconds * clip.sample_rate))
    if win <= 0 or hop <= 0:
        raise ValueError("window and hop must be positive")
    out = []
    start = 0
    while start + win <= clip.n_samples:
        out.append(clip.slice(start, start + win))
        start += hop
    return out


def mix_at_snr(clean: AudioClip, noise: AudioClip,
               snr_db: float) -> tuple[AudioClip, AudioClip]:
    """Scale clean speech against the noise to hit ``snr_db`` exactly.

    Returns (noisy, scaled_clean).  The noise is never rescaled — its level
    carries the physics — and the mixture is formed in one float64 addition,
    noisy = scaled_clean + noise, so the construction is reproducible
    operation for operation.
    """
    if clean.sample_rate != noise.sample_rate:
        raise ValueError("clean and noise sample rates differ")
    if clean.n_samples != noise.n_samples:
        raise ValueError(
            f"length mismatch: clean {clean.n_samples}, noise {noise.n_samples}")
    if clean.channel_count != 1 or noise.channel_count != 1:
        raise ValueError("mixing expects mono clips")
    c = clean.mono()
    n = noise.mono()
    p_clean = float(np.mean(c * c))
    p_noise = float(np.mean(n * n))
    if p_clean == 0.0:
        raise ValueError("clean segment is silent; cannot set an SNR")
    if p_noise == 0.0:
        raise ValueError("noise segment is silent; cannot set an SNR")
    gain = np.sqrt(p_noise / p_clean * 10.0 ** (snr_db / 10.0))
    scaled = gain * c
    noisy = scaled + n
    return AudioClip(noisy, clean.sample_rate), AudioClip(scaled, clean.sample_rate)


def _rng(seed: int, salt: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), salt]))


def _split_sources(names: list[str], train_fraction: float,
                   rng: np.random.Generator, what: str) -> tuple[list[str], list[str]]:
    if len(names) < 2:
        raise ValueError(f"need at least 2 {what} to form train/val splits, got {len(names)}")
    order = sorted(names)
    rng.shuffle(order)
    n_train = int(round(train_fraction * len(order)))
    n_train = min(max(n_train, 1), len(order) - 1)
    return order[:n_train], order[n_train:]


def _cut_utterances(clean_files: dict[str, AudioClip], names: list[str],
                    win: int) -> list[tuple[str, AudioClip]]:
    out = []
    for name in sorted(names):
        clip = clean_files[name]
        for k in range(clip.n_samples // win):
            out.append((f"{name}u{k:02d}", clip.slice(k * win, (k + 1) * win)))
    return out


def build_dataset(captures: list[ExtractedCapture],
                  clean_files: dict[str, AudioClip],
                  out_dir: str | Path,
                  settings: MixSettings = MixSettings()) -> Path:
    """Write mixture records and a JSONL manifest; returns the manifest path.

    Layout under ``out_dir``: records/<id>.noisy.wav, .clean.wav (the scaled
    reference), .stack.wav, plus manifest.jsonl.  Fully deterministic in
    (inputs, settings): reruns produce byte-identical trees.
    """
    out_dir = Path(out_dir)
    if not captures:
        raise ValueError("no captures given")
    if not clean_files:
        raise ValueError("no clean speech given")
    rate = captures[0].noise.sample_rate
    for cap in captures:
        if cap.noise.sample_rate != rate:
            raise ValueError("captures disagree on sample rate")
    for name, clip in clean_files.items():
        if clip.sample_rate != rate:
            raise ValueError(f"clean file {name} rate {clip.sample_rate} != {rate}")
        if clip.channel_count != 1:
            raise ValueError(f"clean file {name} is not mono")

    win = int(round(settings.window_seconds * rate))

    train_caps, val_caps = _split_sources([c.capture_id for c in captures],
                                          settings.train_fraction,
                                          _rng(settings.seed, 0x53504C31), "captures")
    train_spk, val_spk = _split_sources(sorted(clean_files),
                                        settings.train_fraction,
                                        _rng(settings.seed, 0x53504C32), "clean files")

    by_id = {c.capture_id: c for c in captures}

    def split_segments(cap_ids: list[str]) -> list[tuple[str, AudioClip, AudioClip]]:
        segs = []
        for cid in sorted(cap_ids):
            cap = by_id[cid]
            noise_segs = segment(cap.noise, settings.window_seconds, settings.hop_seconds)
            stack_segs = segment(cap.stack, settings.window_seconds, settings.hop_seconds)
            for k, (nseg, sseg) in enumerate(zip(noise_segs, stack_segs)):
                segs.append((cid, nseg, sseg))
        return segs

    records: list[ManifestRecord] = []
    rec_dir = out_dir / "records"
    rec_dir.mkdir(parents=True, exist_ok=True)
    lo, hi = settings.snr_range_db

    def emit(split: str, pairs, snr_rng, seed_salt: int):
        for i, ((cid, nseg, sseg), (uid, useg)) in enumerate(pairs):
            snr = float(snr_rng.uniform(lo, hi))
            noisy, scaled = mix_at_snr(useg, nseg, snr)
            rid = f"{split}_{i:04d}"
            paths = {kind: f"records/{rid}.{kind}.wav"
                     for kind in ("noisy", "clean", "stack")}
            write_wav(noisy, out_dir / paths["noisy"])
            write_wav(scaled, out_dir / paths["clean"])
            write_wav(sseg, out_dir / paths["stack"])
            rec_seed = int(np.random.SeedSequence(
                [settings.seed, seed_salt, i]).generate_state(1)[0])
            records.append(ManifestRecord(
                id=rid, noisy=paths["noisy"], features=paths["stack"],
                clean=paths["clean"], snr_db=snr, split=split, seed=rec_seed,
                utterance_id=uid, capture_id=cid))

    val_pairs_cache = None
    for split, cap_ids, spk in (("train", train_caps, train_spk),
                                ("val", val_caps, val_spk)):
        segs = split_segments(cap_ids)
        utts = _cut_utterances(clean_files, spk, win)
        shuf = _rng(settings.seed, 0x504152 + (0 if split == "train" else 1))
        shuf.shuffle(segs)
        shuf.shuffle(utts)
        n = min(len(segs), len(utts))
        if n == 0:
            raise ValueError(
                f"insufficient material for {split}: {len(segs)} segments, "
                f"{len(utts)} utterances")
        pairs = list(zip(segs[:n], utts[:n]))
        emit(split, pairs, _rng(settings.seed, 0x534E52 + (0 if split == "train" else 1)),
             seed_salt=10 if split == "train" else 11)
        if split == "val":
            val_pairs_cache = (segs[:n], utts[:n])

    # test: validation material re-paired under fresh SNRs
    segs, utts = val_pairs_cache
    perm = _rng(settings.seed, 0x504152 + 2)
    utts = list(utts)
    perm.shuffle(utts)
    emit("test", list(zip(segs, utts)), _rng(settings.seed, 0x534E52 + 2), seed_salt=12)

    manifest_path = out_dir / "manifest.jsonl"
    write_manifest(records, manifest_path)
    report = resample_meta_check(records, snr_range=(lo, hi), base_dir=out_dir)
    if not report.ok:
        raise ValueError(f"dataset failed validation: {report.summary()}")
    return manifest_path
