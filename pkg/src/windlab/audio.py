"""Audio containers, WAV file I/O, and dataset manifest records.

Everything downstream passes audio around as :class:`AudioClip`: an immutable
(channels, samples) float array plus a sample rate.  WAV support is limited to
uncompressed RIFF files in pcm16 and float32, which is all the pipeline needs.
Manifests are JSON-lines, one record per line.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict, field
from pathlib import Path

import numpy as np

# Integer <-> float mapping for pcm16: divide by 32768 on read, multiply and
# round half away from zero on write.  +1.0 maps to 32767 (int16 ceiling).
_PCM16_SCALE = 32768.0

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_IEEE_FLOAT = 0x0003
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


class AudioClip:
    """Immutable multichannel waveform with an explicit sample rate.

    samples are stored as a read-only float64 array of shape
    (channel_count, n_samples), nominally in [-1, 1].
    """

    __slots__ = ("samples", "sample_rate")

    def __init__(self, samples, sample_rate: float):
        arr = np.asarray(samples, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[np.newaxis, :]
        if arr.ndim != 2:
            raise ValueError(f"samples must be 1-D or 2-D, got shape {arr.shape}")
        if sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {sample_rate}")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        self.samples = arr
        self.sample_rate = float(sample_rate)

    @property
    def channel_count(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_seconds(self) -> float:
        return self.samples.shape[1] / self.sample_rate

    def channel(self, index: int) -> np.ndarray:
        """One channel as a read-only 1-D array."""
        return self.samples[index]

    def mono(self) -> np.ndarray:
        if self.channel_count != 1:
            raise ValueError(f"expected mono clip, got {self.channel_count} channels")
        return self.samples[0]

    def slice(self, start: int, stop: int) -> "AudioClip":
        """Sample-index slice, all channels."""
        if not (0 <= start <= stop <= self.n_samples):
            raise ValueError(f"slice [{start}:{stop}] out of range for {self.n_samples} samples")
        return AudioClip(self.samples[:, start:stop], self.sample_rate)

    def __repr__(self) -> str:
        return (f"AudioClip(channels={self.channel_count}, n={self.n_samples}, "
                f"rate={self.sample_rate:g})")


def concat(clips: list[AudioClip]) -> AudioClip:
    """Concatenate clips along time.  Rates and channel counts must agree."""
    if not clips:
        raise ValueError("cannot concatenate an empty list of clips")
    rate = clips[0].sample_rate
    chans = clips[0].channel_count
    for c in clips[1:]:
        if c.sample_rate != rate or c.channel_count != chans:
            raise ValueError("clips disagree on sample rate or channel count")
    return AudioClip(np.concatenate([c.samples for c in clips], axis=1), rate)


# ---------------------------------------------------------------------------
# WAV (RIFF) I/O
# ---------------------------------------------------------------------------

def read_wav(path) -> AudioClip:
    """Read a pcm16 or float32 RIFF WAV file.

    pcm16 samples are mapped to floats by dividing by 32768.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise ValueError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos:pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body_start = pos + 8
        if cid == b"fmt ":
            if body_start + size > len(raw) or size < 16:
                raise ValueError(f"{path}: malformed fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", raw, body_start)
            if fmt[0] == _WAVE_FORMAT_EXTENSIBLE:
                # sub-format code sits in the first two bytes of the GUID
                if size < 40:
                    raise ValueError(f"{path}: truncated WAVE_FORMAT_EXTENSIBLE fmt chunk")
                (subcode,) = struct.unpack_from("<H", raw, body_start + 24)
                fmt = (subcode,) + fmt[1:]
        elif cid == b"data":
            if body_start + size > len(raw):
                raise ValueError(f"{path}: truncated data chunk "
                                 f"(declared {size} bytes, {len(raw) - body_start} available)")
            data = raw[body_start:body_start + size]
        pos = body_start + size + (size & 1)  # chunks are word-aligned

    if fmt is None:
        raise ValueError(f"{path}: missing fmt chunk")
    if data is None:
        raise ValueError(f"{path}: missing data chunk")

    code, channels, rate, _byterate, block_align, bits = fmt
    if channels < 1:
        raise ValueError(f"{path}: invalid channel count {channels}")

    if code == _WAVE_FORMAT_PCM and bits == 16:
        flat = np.frombuffer(data[:len(data) - len(data) % (2 * channels)], dtype="<i2")
        samples = flat.astype(np.float64) / _PCM16_SCALE
    elif code == _WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        flat = np.frombuffer(data[:len(data) - len(data) % (4 * channels)], dtype="<f4")
        samples = flat.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported encoding (format code {code}, {bits}-bit); "
                         "only pcm16 and float32 are readable")

    frames = samples.size // channels
    samples = samples[:frames * channels].reshape(frames, channels).T
    return AudioClip(samples, rate)


def write_wav(clip: AudioClip, path, encoding: str = "float32") -> None:
    """Write a clip as pcm16 or float32 WAV.

    Non-finite samples are rejected.  pcm16 refuses amplitudes outside
    [-1, 1]; mixing bugs must surface rather than be clipped away.
    """
    if encoding not in ("pcm16", "float32"):
        raise ValueError(f"unknown encoding {encoding!r}")
    x = clip.samples
    if not np.all(np.isfinite(x)):
        raise ValueError("refusing to write non-finite samples")

    if encoding == "pcm16":
        if np.any(np.abs(x) > 1.0):
            raise ValueError("pcm16 amplitudes must lie in [-1, 1]; normalize before writing")
        scaled = np.sign(x) * np.floor(np.abs(x) * _PCM16_SCALE + 0.5)
        payload = np.minimum(scaled, 32767.0).astype("<i2")
        bits, code = 16, _WAVE_FORMAT_PCM
    else:
        payload = x.astype("<f4")
        bits, code = 32, _WAVE_FORMAT_IEEE_FLOAT

    channels = clip.channel_count
    rate = int(round(clip.sample_rate))
    frame_bytes = channels * bits // 8
    body = payload.T.tobytes()  # interleaved frames

    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(body), b"WAVE",
        b"fmt ", 16, code, channels, rate, rate * frame_bytes, frame_bytes, bits,
        b"data", len(body),
    )
    Path(path).write_bytes(header + body)


# ---------------------------------------------------------------------------
# Dataset manifest
# ---------------------------------------------------------------------------

@dataclass
class ManifestRecord:
    """One mixture example: file paths plus mixing metadata.

    utterance_id and capture_id name the source material so split leakage
    can be detected without re-reading audio.
    """

    id: str
    noisy: str
    features: str
    clean: str
    snr_db: float
    split: str
    seed: int
    utterance_id: str = ""
    capture_id: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "ManifestRecord":
        return cls(**json.loads(line))


def write_manifest(records: list[ManifestRecord], path) -> None:
    text = "".join(r.to_json() + "\n" for r in records)
    Path(path).write_text(text)


def read_manifest(path) -> list[ManifestRecord]:
    path = Path(path)
    records = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            records.append(ManifestRecord.from_json(line))
        except (json.JSONDecodeError, TypeError) as exc:
            raise ValueError(f"{path}:{lineno}: unreadable manifest line: {exc}") from exc
    return records


@dataclass
class ValidationReport:
    """Findings from manifest validation, each as a human-readable string."""

    duplicate_ids: list[str] = field(default_factory=list)
    leakage: list[str] = field(default_factory=list)
    missing_files: list[str] = field(default_factory=list)
    duration_mismatches: list[str] = field(default_factory=list)
    snr_violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.duplicate_ids or self.leakage or self.missing_files
                    or self.duration_mismatches or self.snr_violations)

    def summary(self) -> str:
        if self.ok:
            return "manifest ok"
        parts = []
        for name in ("duplicate_ids", "leakage", "missing_files",
                     "duration_mismatches", "snr_violations"):
            items = getattr(self, name)
            if items:
                parts.append(f"{name}: {len(items)}")
        return "; ".join(parts)


def resample_meta_check(records: list[ManifestRecord],
                        snr_range: tuple[float, float] | None = None,
                        base_dir=None,
                        check_files: bool = True) -> ValidationReport:
    """Validate a manifest: duplicates, split leakage, files, SNR range.

    Leakage means a source utterance or capture appearing both in train and
    in val/test.  The test split deliberately reuses validation material
    (re-paired, re-drawn SNR), so val/test sharing is not flagged.
    """
    report = ValidationReport()
    base = Path(base_dir) if base_dir is not None else None

    seen: set[str] = set()
    for r in records:
        if r.id in seen:
            report.duplicate_ids.append(r.id)
        seen.add(r.id)

    def split_sources(attr: str) -> dict[str, set[str]]:
        out: dict[str, set[str]] = {}
        for r in records:
            key = getattr(r, attr)
            if key:
                out.setdefault(key, set()).add(r.split)
        return out

    for attr in ("utterance_id", "capture_id"):
        for src, splits in sorted(split_sources(attr).items()):
            if "train" in splits and (splits - {"train"}):
                others = ",".join(sorted(splits - {"train"}))
                report.leakage.append(f"{attr} {src} appears in train and {others}")

    if snr_range is not None:
        lo, hi = snr_range
        for r in records:
            if not (lo <= r.snr_db <= hi):
                report.snr_violations.append(
                    f"{r.id}: snr_db {r.snr_db:g} outside [{lo:g}, {hi:g}]")

    if check_files:
        for r in records:
            durations = {}
            for kind in ("noisy", "features", "clean"):
                p = Path(getattr(r, kind))
                if base is not None and not p.is_absolute():
                    p = base / p
                if not p.exists():
                    report.missing_files.append(f"{r.id}: {kind} file {p} missing")
                    continue
                clip = read_wav(p)
                durations[kind] = clip.n_samples
            if len(durations) == 3 and len(set(durations.values())) > 1:
                report.duration_mismatches.append(
                    f"{r.id}: sample counts differ {durations}")

    report.duplicate_ids.sort()
    report.leakage.sort()
    report.missing_files.sort()
    report.duration_mismatches.sort()
    report.snr_violations.sort()
    return report
