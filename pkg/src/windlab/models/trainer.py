"""Two-stage trainer: baseline backbones, then fusion fine-tuning.

Stage "baseline" trains a speech-only model; stage "fused" builds the
fusion variant, initialises the shared backbone from a baseline checkpoint,
and trains all parameters.  Both fused models start as the *exact* baseline
function: DEMUCS because the fusion projection initialises as identity on
its skip half, DCCRN because the widened first LSTM layer receives the
baseline input weights in its speech columns and zeros in the new
ultrasound columns.  AdamW, early stopping on validation loss, per-epoch
CSV metric log.  Fully deterministic in (data, config, seed).
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..audio import AudioClip, ManifestRecord, read_manifest, read_wav
from ..metrics import si_sdr, stoi
from ..nn import AdamW, Tensor, load_checkpoint, save_checkpoint
from .dccrn import DccrnConfig, DccrnDenoiser
from .demucs import DemucsConfig, DemucsDenoiser
from .losses import StftLossConfig, dccrn_loss, demucs_loss

__all__ = ["TrainSettings", "TrainResult", "build_model", "train",
           "load_enhancer", "select_feature_channels", "MODEL_KINDS", "STAGES"]

MODEL_KINDS = ("demucs", "dccrn")
STAGES = ("baseline", "fused")


@dataclass(frozen=True)
class TrainSettings:
    epochs: int = 10
    batch_size: int = 8
    crop_seconds: float = 1.5
    learning_rate: float = 3e-4
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 1e-3
    patience: int = 5
    seed: int = 0
    max_steps_per_epoch: int | None = None
    val_max_records: int | None = 12
    val_crop_seconds: float | None = None   # None = full records
    fixed_crops: bool = False               # centre crops every step (overfit runs)
    si_denominator: str = "residual"
    lambda_si: float = -0.2
    lambda_stft: float = 1.0
    stft_fft_sizes: tuple[int, ...] = (512, 1024, 2048)
    stft_hops: tuple[int, ...] = (128, 256, 512)
    feature_mode: str = "dual"
    model_overrides: dict = field(default_factory=dict)
    # Train the pinned loss in a per-crop normalized domain: divide noisy and
    # clean by std(noisy crop), features by std(feature crop).  Rebalances the
    # waveform L1 term against the scale-normalized STFT terms when targets
    # sit far below the mixture level; inference mirrors the scaling exactly.
    normalize_inputs: bool = False
    # Piecewise-constant learning-rate override: ((epoch, lr), ...) applied at
    # the start of the named epoch.  Empty = constant learning_rate.
    lr_schedule: tuple = ()
    # Which validation metric picks the checkpoint that gets saved: "loss"
    # (minimise) or "si_sdr" (maximise).  Early stopping always watches the
    # validation loss; selection may differ because the waveform losses are
    # nearly phase-blind while SI-SDR is exactly the deployment metric.
    select_metric: str = "loss"
    # SNR-curriculum remixing: ((start_epoch, lo_db, hi_db), ...).  From
    # start_epoch on, every training crop is re-mixed on the fly at a target
    # SNR drawn uniformly from [lo_db, hi_db]: the crop's own noise
    # (noisy - clean) is kept and the clean part rescaled.  The ultrasound
    # stack is untouched (it senses the wind, not the speech), and validation
    # always runs on the dataset's true mixtures.  Empty = off.
    snr_curriculum: tuple = ()


@dataclass
class TrainResult:
    checkpoint_path: Path
    log_path: Path
    epochs_run: int
    best_val_loss: float
    best_epoch: int
    history: list[dict]


def select_feature_channels(stack: np.ndarray, mode: str) -> np.ndarray:
    """Pick the I/Q channels a model trained in `mode` expects from a
    (possibly dual) stored stack."""
    if mode == "dual":
        if stack.shape[0] != 4:
            raise ValueError(f"dual mode expects 4 channels, got {stack.shape[0]}")
        return stack
    if mode in ("single_20k", "single_21k"):
        if stack.shape[0] == 2:
            return stack
        if stack.shape[0] == 4:
            return stack[0:2] if mode == "single_20k" else stack[2:4]
        raise ValueError(f"{mode} expects 2 or 4 channels, got {stack.shape[0]}")
    raise ValueError(f"unknown feature mode {mode!r}")


def _feature_channel_count(mode: str) -> int:
    return 4 if mode == "dual" else 2


def build_model(kind: str, fused: bool, feature_mode: str = "dual",
                seed: int = 0, overrides: dict | None = None):
    """Construct a model from its kind/stage and optional config overrides."""
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    overrides = dict(overrides or {})
    overrides["fused"] = fused
    overrides["feature_channels"] = _feature_channel_count(feature_mode)
    if kind == "demucs":
        cfg = DemucsConfig(**overrides)
        return DemucsDenoiser(cfg, seed=seed)
    cfg = DccrnConfig(**{k: (tuple(v) if isinstance(v, list) else v)
                         for k, v in overrides.items()})
    return DccrnDenoiser(cfg, seed=seed)


def _fused_init(model, baseline_path: Path, kind: str) -> tuple[int, int]:
    """Load shared backbone weights from a baseline checkpoint.

    Returns (n_loaded, n_fresh).  For DCCRN, fusion widens the input of the
    first LSTM layer; the baseline input weights are grafted into the
    speech-prefix columns (layout: channel * bottleneck_bins + bin, speech
    channels concatenated first) and the new ultrasound columns start at
    zero, so the fused model's initial output equals the baseline's.
    """
    state = load_checkpoint(baseline_path)
    named = dict(model.named_parameters())
    grafted = 0
    if kind == "dccrn":
        for key in ("lstm.0.wx_r", "lstm.0.wx_i"):
            base, param = state.get(key), named.get(key)
            if (base is not None and param is not None
                    and base.shape[0] == param.data.shape[0]
                    and base.shape[1] < param.data.shape[1]):
                wide = np.zeros_like(param.data)
                wide[:, :base.shape[1]] = base
                param.data[...] = wide
                state.pop(key)
                grafted += 1
    usable = {k: v for k, v in state.items()
              if k in named and tuple(v.shape) == tuple(named[k].data.shape)}
    model.load_state_dict(usable, strict=False)
    return len(usable) + grafted, len(named) - len(usable) - grafted


def _loss_fn(kind: str, cfg: TrainSettings):
    stft_cfg = StftLossConfig(fft_sizes=tuple(cfg.stft_fft_sizes),
                              hops=tuple(cfg.stft_hops))
    if kind == "demucs":
        return lambda est, ref: demucs_loss(est, ref, stft_cfg)
    return lambda est, ref: dccrn_loss(
        est, ref, lambda_si=cfg.lambda_si, lambda_stft=cfg.lambda_stft,
        si_denominator=cfg.si_denominator, stft_cfg=stft_cfg)


class _RecordCache:
    """Lazy WAV loader, float32, keyed by record id."""

    def __init__(self, base_dir: Path, mode: str):
        self.base = base_dir
        self.mode = mode
        self._cache: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def get(self, rec: ManifestRecord):
        if rec.id not in self._cache:
            noisy = read_wav(self.base / rec.noisy).mono().astype(np.float32)
            clean = read_wav(self.base / rec.clean).mono().astype(np.float32)
            stack = select_feature_channels(
                read_wav(self.base / rec.features).samples, self.mode
            ).astype(np.float32)
            self._cache[rec.id] = (noisy, clean, stack)
        return self._cache[rec.id]


_NORM_EPS = np.float32(1e-8)


def normalize_example(noisy: np.ndarray, stack: np.ndarray):
    """Per-example scales for normalized-domain training and inference:
    (std of the noisy waveform, std of the feature stack), both floored."""
    return (noisy.std() + _NORM_EPS, stack.std() + _NORM_EPS)


def _remix_crop(noisy: np.ndarray, clean: np.ndarray, lo_db: float,
                hi_db: float, rng: np.random.Generator):
    """Re-pair the crop's own noise with a rescaled clean part so the crop
    hits a drawn target SNR.  Falls back to the original pair when either
    component is essentially silent (speech pauses)."""
    noise = noisy - clean
    p_clean = float(np.mean(clean.astype(np.float64) ** 2))
    p_noise = float(np.mean(noise.astype(np.float64) ** 2))
    snr_db = float(rng.uniform(lo_db, hi_db))
    if p_clean < 1e-12 or p_noise < 1e-12:
        return noisy, clean
    gain = np.float32(np.sqrt(p_noise / p_clean * 10.0 ** (snr_db / 10.0)))
    scaled = gain * clean
    return noise + scaled, scaled


def _batch(cache: _RecordCache, records: list[ManifestRecord],
           crop: int | None, rng: np.random.Generator | None,
           normalize: bool = False,
           snr_window: tuple[float, float] | None = None):
    """Assemble (noisy, clean, stack) float32 batches with a shared crop per
    record: random when rng is given, centred otherwise.  With ``normalize``
    each example is scaled by its own crop statistics (clean shares the noisy
    scale, so the mixing SNR is preserved inside the normalized domain)."""
    noisies, cleans, stacks = [], [], []
    for rec in records:
        noisy, clean, stack = cache.get(rec)
        n = len(noisy)
        if crop is not None and crop < n:
            if rng is not None:
                start = int(rng.integers(0, n - crop + 1))
            else:
                start = (n - crop) // 2
            noisy = noisy[start:start + crop]
            clean = clean[start:start + crop]
            stack = stack[:, start:start + crop]
        if snr_window is not None and rng is not None:
            noisy, clean = _remix_crop(noisy, clean, snr_window[0],
                                       snr_window[1], rng)
        if normalize:
            sn, sf = normalize_example(noisy, stack)
            noisy, clean, stack = noisy / sn, clean / sn, stack / sf
        noisies.append(noisy)
        cleans.append(clean)
        stacks.append(stack)
    return (np.stack(noisies), np.stack(cleans), np.stack(stacks))


def train(manifest_path: str | Path, out_dir: str | Path, kind: str, stage: str,
          settings: TrainSettings = TrainSettings(),
          baseline_checkpoint: str | Path | None = None,
          run_name: str | None = None) -> TrainResult:
    """Train one model stage against a dataset manifest.

    Writes <run_name>.ckpt (best-validation parameters), <run_name>.json
    (architecture + training metadata) and <run_name>.log.csv under
    ``out_dir``; returns the paths plus the training history.
    """
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}")
    if settings.select_metric not in ("loss", "si_sdr"):
        raise ValueError(f"unknown select_metric {settings.select_metric!r}")
    fused = stage == "fused"
    if fused and baseline_checkpoint is None:
        raise ValueError("fused stage requires a baseline checkpoint")
    manifest_path = Path(manifest_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run_name = run_name or f"{kind}_{stage}"

    records = read_manifest(manifest_path)
    train_recs = sorted([r for r in records if r.split == "train"], key=lambda r: r.id)
    val_recs = sorted([r for r in records if r.split == "val"], key=lambda r: r.id)
    if not train_recs or not val_recs:
        raise ValueError("manifest must contain train and val records")
    if settings.val_max_records is not None:
        val_recs = val_recs[:settings.val_max_records]

    model = build_model(kind, fused, settings.feature_mode, seed=settings.seed,
                        overrides=settings.model_overrides)
    loaded = fresh = None
    if fused:
        loaded, fresh = _fused_init(model, Path(baseline_checkpoint), kind)

    cache = _RecordCache(manifest_path.parent, settings.feature_mode)
    rate = read_wav(manifest_path.parent / train_recs[0].noisy).sample_rate
    crop = int(round(settings.crop_seconds * rate))
    val_crop = (int(round(settings.val_crop_seconds * rate))
                if settings.val_crop_seconds else None)

    loss_fn = _loss_fn(kind, settings)
    optim = AdamW(model.parameters(), lr=settings.learning_rate,
                  betas=settings.betas, weight_decay=settings.weight_decay)

    def run_model(noisy: np.ndarray, stack: np.ndarray, clean: np.ndarray):
        est = model.forward(Tensor(noisy), Tensor(stack) if fused else None)
        return est, loss_fn(est, Tensor(clean))

    def validate() -> tuple[float, float, float]:
        losses, sis, stois = [], [], []
        for i in range(0, len(val_recs), settings.batch_size):
            chunk = val_recs[i:i + settings.batch_size]
            noisy, clean, stack = _batch(cache, chunk, val_crop, rng=None,
                                         normalize=settings.normalize_inputs)
            est, loss = run_model(noisy, stack, clean)
            losses.append(float(loss.data))
            for b in range(len(chunk)):
                try:
                    sis.append(si_sdr(clean[b], est.data[b]))
                    stois.append(stoi(clean[b], est.data[b], rate))
                except ValueError:
                    pass  # silent reference crop: no defined score
        return (float(np.mean(losses)),
                float(np.mean(sis)) if sis else float("nan"),
                float(np.mean(stois)) if stois else float("nan"))

    history: list[dict] = []
    min_val_loss = np.inf          # early-stopping tracker (always the loss)
    best_score = np.inf            # checkpoint-selection tracker
    best_epoch = -1
    best_val_loss = np.inf
    best_val_si = float("nan")
    best_state: dict[str, np.ndarray] | None = None
    stale = 0
    log_rows: list[dict] = []

    lr_steps = sorted((int(e), float(lr)) for e, lr in settings.lr_schedule)
    curriculum = sorted((int(e), min(float(a), float(b)), max(float(a), float(b)))
                        for e, a, b in settings.snr_curriculum)

    for epoch in range(settings.epochs):
        for at_epoch, lr in lr_steps:
            if at_epoch == epoch:
                optim.lr = lr
        snr_window = None
        for at_epoch, lo, hi in curriculum:
            if epoch >= at_epoch:
                snr_window = (lo, hi)
        order_rng = np.random.default_rng(
            np.random.SeedSequence([settings.seed, 0x45504F43, epoch]))
        crop_rng = np.random.default_rng(
            np.random.SeedSequence([settings.seed, 0x43524F50, epoch]))
        order = order_rng.permutation(len(train_recs))
        step_losses, step_sis = [], []
        n_steps = len(order) // settings.batch_size
        if settings.max_steps_per_epoch is not None:
            n_steps = min(n_steps, settings.max_steps_per_epoch)
        if n_steps == 0:
            raise ValueError("not enough training records for one batch")
        for step in range(n_steps):
            idx = order[step * settings.batch_size:(step + 1) * settings.batch_size]
            chunk = [train_recs[i] for i in idx]
            noisy, clean, stack = _batch(
                cache, chunk, crop, rng=None if settings.fixed_crops else crop_rng,
                normalize=settings.normalize_inputs, snr_window=snr_window)
            optim.zero_grad()
            est, loss = run_model(noisy, stack, clean)
            value = float(loss.data)
            if not np.isfinite(value):
                raise RuntimeError(
                    f"non-finite training loss at epoch {epoch} step {step}: {value}")
            loss.backward()
            optim.step()
            step_losses.append(value)
            for b in range(len(chunk)):
                try:
                    step_sis.append(si_sdr(clean[b], est.data[b]))
                except ValueError:
                    pass  # silent reference crop

        val_loss, val_si, val_stoi = validate()
        train_loss = float(np.mean(step_losses))
        train_si = float(np.mean(step_sis)) if step_sis else float("nan")
        log_rows.append({"epoch": epoch, "split": "train", "loss": train_loss,
                         "si_sdr": train_si, "stoi": float("nan")})
        log_rows.append({"epoch": epoch, "split": "val", "loss": val_loss,
                         "si_sdr": val_si, "stoi": val_stoi})
        history.append({"epoch": epoch, "train_loss": train_loss,
                        "val_loss": val_loss, "val_si_sdr": val_si,
                        "val_stoi": val_stoi})

        if settings.select_metric == "si_sdr":
            score = -val_si if np.isfinite(val_si) else np.inf
        else:
            score = val_loss
        if score < best_score:
            best_score = score
            best_epoch = epoch
            best_val_loss = val_loss
            best_val_si = val_si
            best_state = model.state_dict()

        if val_loss < min_val_loss:
            min_val_loss = val_loss
            stale = 0
        else:
            stale += 1
            if stale > settings.patience:
                break

    if best_state is None:
        raise RuntimeError("training produced no usable validation metric")

    ckpt_path = out_dir / f"{run_name}.ckpt"
    save_checkpoint(best_state, ckpt_path)
    meta = {
        "kind": kind,
        "stage": stage,
        "feature_mode": settings.feature_mode,
        "model_overrides": dict(settings.model_overrides),
        "seed": settings.seed,
        "epochs_run": len(history),
        "best_epoch": best_epoch,
        "best_val_loss": best_val_loss,
        "best_val_si_sdr": best_val_si if np.isfinite(best_val_si) else None,
        "settings": _settings_dict(settings),
        "fused_init": None if loaded is None else {"loaded": loaded, "fresh": fresh},
    }
    (out_dir / f"{run_name}.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n")

    log_path = out_dir / f"{run_name}.log.csv"
    with open(log_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["epoch", "split", "loss",
                                               "si_sdr", "stoi"])
        writer.writeheader()
        for row in log_rows:
            writer.writerow(row)

    return TrainResult(checkpoint_path=ckpt_path, log_path=log_path,
                       epochs_run=len(history), best_val_loss=best_val_loss,
                       best_epoch=best_epoch, history=history)


def _settings_dict(settings: TrainSettings) -> dict:
    out = asdict(settings)
    for key, value in out.items():
        if isinstance(value, tuple):
            out[key] = list(value)
    return out


def load_enhancer(checkpoint_path: str | Path):
    """Rebuild a trained model from <ckpt> + <ckpt stem>.json and wrap it as
    an enhancer callable for :func:`windlab.metrics.evaluate`."""
    checkpoint_path = Path(checkpoint_path)
    meta_path = checkpoint_path.with_suffix(".json")
    if not meta_path.exists():
        raise FileNotFoundError(f"missing checkpoint metadata {meta_path}")
    meta = json.loads(meta_path.read_text())
    fused = meta["stage"] == "fused"
    model = build_model(meta["kind"], fused, meta["feature_mode"],
                        seed=meta.get("seed", 0),
                        overrides=meta.get("model_overrides") or {})
    model.load_state_dict(load_checkpoint(checkpoint_path), strict=True)
    mode = meta["feature_mode"]
    normalize = bool((meta.get("settings") or {}).get("normalize_inputs", False))

    def enhance(noisy: AudioClip, features: AudioClip) -> np.ndarray:
        x = noisy.mono().astype(np.float32)
        feats = select_feature_channels(features.samples, mode).astype(np.float32)
        scale = 1.0
        if normalize:
            sn, sf = normalize_example(x, feats)
            x, feats, scale = x / sn, feats / sf, float(sn)
        est = model.forward(Tensor(x[None, :]),
                            Tensor(feats[None, :, :]) if fused else None)
        return est.data[0].astype(np.float64) * scale

    return enhance
