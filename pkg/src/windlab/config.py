"""TOML run configuration for the pipeline CLI.

One file configures the whole pipeline; each subcommand reads its own table
plus the shared ``[run]`` table.  Path values may reference environment
variables (``${DATA_ROOT}/captures``) and ``~``.  Every subcommand writes
the resolved configuration next to its outputs so runs are reproducible
from the artifacts alone.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

try:  # 3.11+
    import tomllib as _toml
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as _toml

from . import __version__

__all__ = ["ConfigError", "RunConfig", "SimulateSection", "FeaturesSection",
           "MixSection", "TrainSection", "EvalSection", "ReportSection",
           "load_config", "write_resolved_config"]


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


def _expand(path: str) -> str:
    return os.path.expanduser(os.path.expandvars(path))


@dataclass
class SimulateSection:
    count: int = 4
    duration_seconds: float = 20.0
    mean_speed_range: tuple[float, float] = (2.0, 4.0)
    reversion_rate: float = 0.8
    volatility: float = 1.2
    carriers: tuple[tuple[float, float], ...] = ((20000.0, 0.25), (21000.0, 0.25))
    noise_gain: float = 0.6
    static_reflection: float = 0.05

    def validate(self):
        if self.count < 1:
            raise ConfigError("simulate.count must be >= 1")
        if self.duration_seconds <= 0:
            raise ConfigError("simulate.duration_seconds must be positive")
        lo, hi = self.mean_speed_range
        if not lo <= hi:
            raise ConfigError("simulate.mean_speed_range must be (low, high)")


@dataclass
class FeaturesSection:
    captures_dir: str = "captures"
    mode: str = "dual"
    noise_lowpass_hz: float = 1200.0
    noise_highpass_hz: float = 20.0
    baseband_lowpass_hz: float = 500.0
    baseband_highpass_hz: float = 10.0
    target_rate: float = 16000.0

    def validate(self):
        if self.mode not in ("dual", "single_20k", "single_21k"):
            raise ConfigError(f"features.mode {self.mode!r} unknown")
        for name in ("noise_lowpass_hz", "noise_highpass_hz",
                     "baseband_lowpass_hz", "baseband_highpass_hz",
                     "target_rate"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"features.{name} must be positive")


@dataclass
class MixSection:
    features_dir: str = "features"
    speech_dir: str = ""            # empty: synthesize a corpus
    n_speakers: int = 4
    utterances_per_speaker: int = 2
    utterance_seconds: float = 5.0
    snr_range_db: tuple[float, float] = (-40.0, -20.0)
    window_seconds: float = 5.0
    hop_seconds: float = 2.0
    train_fraction: float = 0.8

    def validate(self):
        lo, hi = self.snr_range_db
        if not lo < hi:
            raise ConfigError("mix.snr_range_db must be (low, high) with low < high")
        if self.window_seconds <= 0 or self.hop_seconds <= 0:
            raise ConfigError("mix window/hop must be positive")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("mix.train_fraction must be in (0, 1)")
        if not self.speech_dir and self.n_speakers < 1:
            raise ConfigError("mix.n_speakers must be >= 1 when synthesizing speech")


@dataclass
class TrainSection:
    manifest: str = "dataset/manifest.jsonl"
    model: str = "demucs"
    stage: str = "baseline"
    baseline_checkpoint: str = ""   # required for stage = "fused"
    run_name: str = ""              # default: <model>_<stage>
    epochs: int = 10
    batch_size: int = 8
    crop_seconds: float = 1.5
    learning_rate: float = 3e-4
    weight_decay: float = 1e-3
    patience: int = 5
    max_steps_per_epoch: int = 0    # 0: no cap
    val_max_records: int = 12
    si_denominator: str = "residual"
    feature_mode: str = "dual"
    model_overrides: dict = field(default_factory=dict)

    def validate(self):
        if self.model not in ("demucs", "dccrn"):
            raise ConfigError(f"train.model {self.model!r} unknown")
        if self.stage not in ("baseline", "fused"):
            raise ConfigError(f"train.stage {self.stage!r} unknown")
        if self.stage == "fused" and not self.baseline_checkpoint:
            raise ConfigError("train.baseline_checkpoint required for the fused stage")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("train.epochs and train.batch_size must be >= 1")
        if self.si_denominator not in ("residual", "projected"):
            raise ConfigError("train.si_denominator must be residual|projected")


@dataclass
class EvalSection:
    manifest: str = "dataset/manifest.jsonl"
    checkpoints: tuple[str, ...] = ()
    splits: tuple[str, ...] = ("test",)
    max_records: int = 0            # 0: all
    include_unprocessed: bool = True

    def validate(self):
        if not self.splits:
            raise ConfigError("eval.splits must not be empty")


@dataclass
class ReportSection:
    eval_csv: str = "eval/metrics.csv"
    bucket_width_db: float = 5.0

    def validate(self):
        if self.bucket_width_db <= 0:
            raise ConfigError("report.bucket_width_db must be positive")


_SECTION_TYPES = {
    "simulate": SimulateSection,
    "features": FeaturesSection,
    "mix": MixSection,
    "train": TrainSection,
    "eval": EvalSection,
    "report": ReportSection,
}


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "runs/out"
    simulate: SimulateSection = field(default_factory=SimulateSection)
    features: FeaturesSection = field(default_factory=FeaturesSection)
    mix: MixSection = field(default_factory=MixSection)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)
    report: ReportSection = field(default_factory=ReportSection)

    def validate(self):
        for name in _SECTION_TYPES:
            getattr(self, name).validate()

    def resolved(self) -> dict:
        out = {"version": __version__, "seed": self.seed,
               "out_dir": _expand(self.out_dir)}
        for name in _SECTION_TYPES:
            out[name] = asdict(getattr(self, name))
        return out


def _build_section(cls, table: dict, where: str):
    known = {f.name: f for f in fields(cls)}
    unknown = set(table) - set(known)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(sorted(unknown))}")
    kwargs = {}
    for key, value in table.items():
        if isinstance(value, list):
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        if isinstance(value, str) and (key.endswith("_dir") or key.endswith("_checkpoint")
                                       or key in ("manifest", "eval_csv")):
            value = _expand(value)
        if key == "checkpoints":
            value = tuple(_expand(str(v)) for v in value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad [{where}] section: {exc}") from exc


def load_config(path: str | Path) -> RunConfig:
    """Parse and validate a TOML run configuration."""
    path = Path(_expand(str(path)))
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path, "rb") as f:
        try:
            raw = _toml.load(f)
        except _toml.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc

    run_table = raw.pop("run", {})
    unknown_run = set(run_table) - {"seed", "out_dir"}
    if unknown_run:
        raise ConfigError(f"unknown key(s) in [run]: {', '.join(sorted(unknown_run))}")
    unknown = set(raw) - set(_SECTION_TYPES)
    if unknown:
        raise ConfigError(f"unknown table(s): {', '.join(sorted(unknown))}")

    cfg = RunConfig(
        seed=int(run_table.get("seed", 0)),
        out_dir=_expand(str(run_table.get("out_dir", "runs/out"))),
        **{name: _build_section(cls, raw.get(name, {}), name)
           for name, cls in _SECTION_TYPES.items()},
    )
    cfg.validate()
    return cfg


def write_resolved_config(cfg: RunConfig, out_dir: str | Path,
                          subcommand: str) -> Path:
    """Dump the resolved configuration (sorted keys, no timestamps) next to
    the subcommand's outputs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = cfg.resolved()
    payload["subcommand"] = subcommand
    path = out_dir / f"resolved_config.{subcommand}.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path
