"""Command-line pipeline: simulate -> features -> mix -> train -> eval -> report.

Each subcommand reads one TOML config (see :mod:`windlab.config`), consumes
the documented artifacts of its predecessors, writes its outputs plus the
resolved configuration under the run's output directory, and exits nonzero
with a diagnostic on any validation failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .airflow import CaptureScene, gen_wind_profile, synth_capture
from .audio import AudioClip, read_manifest, read_wav, write_wav
from .config import ConfigError, RunConfig, load_config, write_resolved_config
from .dataset import ExtractedCapture, MixSettings, build_dataset
from .features import FeatureConfig, extract_feature_stack
from .metrics import EvalReport, evaluate, render_table
from .models import TrainSettings, load_enhancer, train
from .speech import synth_clean_corpus

__all__ = ["main"]


def _out(cfg: RunConfig, *parts: str) -> Path:
    path = Path(cfg.out_dir).joinpath(*parts)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_simulate(cfg: RunConfig) -> int:
    sec = cfg.simulate
    out = _out(cfg, "captures")
    write_resolved_config(cfg, out, "simulate")
    lo, hi = sec.mean_speed_range
    index = []
    for i in range(sec.count):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x53494D, i]))
        mean_speed = float(lo + (hi - lo) * rng.random())
        wind_seed = int(rng.integers(0, 2**31))
        wind = gen_wind_profile(sec.duration_seconds, mean_speed,
                                sec.reversion_rate, sec.volatility, wind_seed)
        scene = CaptureScene(duration_seconds=sec.duration_seconds, wind=wind,
                             carriers=tuple(tuple(c) for c in sec.carriers),
                             noise_gain=sec.noise_gain,
                             static_reflection=sec.static_reflection)
        clip = synth_capture(scene)
        cap_id = f"cap{i:03d}"
        write_wav(clip, out / f"{cap_id}.wav")
        index.append({"id": cap_id, "seed": wind_seed, "mean_speed": mean_speed,
                      "duration_seconds": sec.duration_seconds,
                      "file": f"{cap_id}.wav"})
    (out / "captures.json").write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
    print(f"simulate: wrote {len(index)} capture(s) to {out}")
    return 0


def _captures_index(captures_dir: Path) -> list[dict]:
    index_path = captures_dir / "captures.json"
    if index_path.exists():
        return json.loads(index_path.read_text())
    wavs = sorted(captures_dir.glob("*.wav"))
    if not wavs:
        raise FileNotFoundError(f"no captures found in {captures_dir}")
    return [{"id": p.stem, "seed": i, "file": p.name} for i, p in enumerate(wavs)]


def cmd_features(cfg: RunConfig) -> int:
    sec = cfg.features
    captures_dir = Path(sec.captures_dir)
    if not captures_dir.is_absolute():
        captures_dir = Path(cfg.out_dir) / captures_dir
    out = _out(cfg, "features")
    write_resolved_config(cfg, out, "features")
    fcfg = FeatureConfig(noise_lowpass_hz=sec.noise_lowpass_hz,
                         noise_highpass_hz=sec.noise_highpass_hz,
                         baseband_lowpass_hz=sec.baseband_lowpass_hz,
                         baseband_highpass_hz=sec.baseband_highpass_hz,
                         target_rate=sec.target_rate)
    entries = []
    for item in _captures_index(captures_dir):
        capture = read_wav(captures_dir / item["file"])
        noise, stack = extract_feature_stack(capture, sec.mode, fcfg,
                                             capture_id=item["id"])
        noise_name = f"{item['id']}.noise.wav"
        stack_name = f"{item['id']}.stack.wav"
        write_wav(noise, out / noise_name)
        write_wav(stack.clip, out / stack_name)
        entries.append({"id": item["id"], "seed": item["seed"],
                        "noise": noise_name, "stack": stack_name})
    meta = {"mode": sec.mode, "target_rate": sec.target_rate, "entries": entries}
    (out / "features.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"features: extracted {len(entries)} capture(s) to {out}")
    return 0


def cmd_mix(cfg: RunConfig) -> int:
    sec = cfg.mix
    features_dir = Path(sec.features_dir)
    if not features_dir.is_absolute():
        features_dir = Path(cfg.out_dir) / features_dir
    meta_path = features_dir / "features.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"missing feature index {meta_path}")
    meta = json.loads(meta_path.read_text())

    captures = [ExtractedCapture(capture_id=e["id"], seed=int(e["seed"]),
                                 noise=read_wav(features_dir / e["noise"]),
                                 stack=read_wav(features_dir / e["stack"]))
                for e in meta["entries"]]

    if sec.speech_dir:
        speech_dir = Path(sec.speech_dir)
        paths = sorted(speech_dir.glob("*.wav"))
        if not paths:
            raise FileNotFoundError(f"no speech WAVs in {speech_dir}")
    else:
        paths = synth_clean_corpus(_out(cfg, "speech"), sec.n_speakers,
                                   sec.utterances_per_speaker,
                                   sec.utterance_seconds,
                                   rate=meta["target_rate"], seed=cfg.seed)
    clean = {p.stem: read_wav(p) for p in paths}

    out = _out(cfg, "dataset")
    write_resolved_config(cfg, out, "mix")
    settings = MixSettings(snr_range_db=tuple(sec.snr_range_db),
                           window_seconds=sec.window_seconds,
                           hop_seconds=sec.hop_seconds,
                           train_fraction=sec.train_fraction,
                           seed=cfg.seed)
    manifest = build_dataset(captures, clean, out, settings)
    n = sum(1 for _ in open(manifest))
    print(f"mix: wrote {n} record(s); manifest at {manifest}")
    return 0


def _train_settings(cfg: RunConfig) -> TrainSettings:
    sec = cfg.train
    return TrainSettings(
        epochs=sec.epochs, batch_size=sec.batch_size,
        crop_seconds=sec.crop_seconds, learning_rate=sec.learning_rate,
        weight_decay=sec.weight_decay, patience=sec.patience,
        seed=cfg.seed,
        max_steps_per_epoch=sec.max_steps_per_epoch or None,
        val_max_records=sec.val_max_records or None,
        si_denominator=sec.si_denominator, feature_mode=sec.feature_mode,
        model_overrides=dict(sec.model_overrides))


def cmd_train(cfg: RunConfig) -> int:
    sec = cfg.train
    manifest = Path(sec.manifest)
    if not manifest.is_absolute():
        manifest = Path(cfg.out_dir) / manifest
    if not manifest.exists():
        raise FileNotFoundError(f"missing manifest {manifest}")
    out = _out(cfg, "train")
    write_resolved_config(cfg, out, "train")
    baseline = sec.baseline_checkpoint or None
    if baseline is not None:
        baseline = Path(baseline)
        if not baseline.is_absolute():
            baseline = Path(cfg.out_dir) / baseline
    result = train(manifest, out, sec.model, sec.stage, _train_settings(cfg),
                   baseline_checkpoint=baseline,
                   run_name=sec.run_name or None)
    print(f"train: {sec.model}/{sec.stage} best val loss "
          f"{result.best_val_loss:.4f} (epoch {result.best_epoch}); "
          f"checkpoint at {result.checkpoint_path}")
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    sec = cfg.eval
    manifest = Path(sec.manifest)
    if not manifest.is_absolute():
        manifest = Path(cfg.out_dir) / manifest
    if not manifest.exists():
        raise FileNotFoundError(f"missing manifest {manifest}")
    out = _out(cfg, "eval")
    write_resolved_config(cfg, out, "eval")

    enhancers = {}
    for ckpt in sec.checkpoints:
        path = Path(ckpt)
        if not path.is_absolute():
            path = Path(cfg.out_dir) / path
        if not path.exists():
            raise FileNotFoundError(f"missing checkpoint {path}")
        enhancers[path.stem] = load_enhancer(path)

    records = read_manifest(manifest)
    report = evaluate(records, enhancers, manifest.parent,
                      splits=tuple(sec.splits),
                      max_records=sec.max_records or None,
                      include_unprocessed=sec.include_unprocessed)
    report.to_csv(out / "metrics.csv")
    report.write_summary(out / "summary.json", cfg.report.bucket_width_db)
    sys.stdout.write(render_table(report, cfg.report.bucket_width_db))
    print(f"eval: scored {len(report.rows)} row(s); CSV at {out / 'metrics.csv'}")
    return 0


def cmd_report(cfg: RunConfig) -> int:
    sec = cfg.report
    eval_csv = Path(sec.eval_csv)
    if not eval_csv.is_absolute():
        eval_csv = Path(cfg.out_dir) / eval_csv
    if not eval_csv.exists():
        raise FileNotFoundError(f"missing eval CSV {eval_csv}")
    report = EvalReport.from_csv(eval_csv)
    out = _out(cfg, "report")
    write_resolved_config(cfg, out, "report")

    agg = report.aggregates()
    base = agg.get("unprocessed")
    with open(out / "comparison.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["model", "records", "mean_si_sdr_db", "mean_stoi",
                         "si_sdr_gain_db", "stoi_gain", "pesq"])
        for model, stats in agg.items():
            gain_si = (stats["mean_si_sdr_db"] - base["mean_si_sdr_db"]
                       if base else float("nan"))
            gain_stoi = (stats["mean_stoi"] - base["mean_stoi"]
                         if base else float("nan"))
            writer.writerow([model, int(stats["count"]),
                             f"{stats['mean_si_sdr_db']:.4f}",
                             f"{stats['mean_stoi']:.4f}",
                             f"{gain_si:.4f}", f"{gain_stoi:.4f}", ""])

    buckets = report.snr_buckets(sec.bucket_width_db)
    labels = sorted({lb for per in buckets.values() for lb in per},
                    key=lambda s: float(s[1:].split(",")[0]))
    with open(out / "snr_sweep.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["model", "snr_bucket", "records",
                         "mean_si_sdr_db", "mean_stoi"])
        for model in sorted(buckets):
            for lb in labels:
                if lb in buckets[model]:
                    stats = buckets[model][lb]
                    writer.writerow([model, lb, int(stats["count"]),
                                     f"{stats['mean_si_sdr_db']:.4f}",
                                     f"{stats['mean_stoi']:.4f}"])
    sys.stdout.write(render_table(report, sec.bucket_width_db))
    print(f"report: tables at {out}")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "features": cmd_features,
    "mix": cmd_mix,
    "train": cmd_train,
    "eval": cmd_eval,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="windlab",
        description="Ultrasound-assisted wind-noise reduction pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--seed", type=int, default=None,
                       help="override the configured seed")
        p.add_argument("--out", default=None,
                       help="override the configured output directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out_dir = args.out
        return _COMMANDS[args.command](cfg)
    except (ConfigError, FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
