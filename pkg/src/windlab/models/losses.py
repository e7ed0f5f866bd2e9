"""Training objectives for both denoisers.

The shared spectral term is a multi-resolution STFT loss: per resolution, a
spectral-convergence term plus an L1 over log magnitudes.  The DEMUCS
objective adds a time-domain L1; the DCCRN objective adds a (negatively
weighted) scale-invariant source-to-noise term, so minimising the total
pushes SI-SNR up while the spectral term keeps magnitudes honest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import nn
from ..nn import functional as F
from ..nn.tensor import Tensor

__all__ = ["StftLossConfig", "multires_stft_loss", "demucs_loss", "dccrn_loss"]

_LN10 = float(np.log(10.0))


@dataclass(frozen=True)
class StftLossConfig:
    fft_sizes: tuple[int, ...] = (512, 1024, 2048)
    hops: tuple[int, ...] = (128, 256, 512)
    mag_floor: float = 1e-8

    def __post_init__(self):
        if len(self.fft_sizes) != len(self.hops):
            raise ValueError("one hop per fft size")


def _hann(n: int) -> np.ndarray:
    k = np.arange(n)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * k / n)


def _magnitude(x: Tensor, fft_size: int, hop: int, window: np.ndarray) -> Tensor:
    t = x.data.shape[-1]
    if t < fft_size:
        x = nn.pad_last(x, 0, fft_size - t)
    else:
        rem = (t - fft_size) % hop
        if rem:
            x = nn.pad_last(x, 0, hop - rem)
    spec = F.stft_c(x, fft_size, hop, window)
    re = nn.getitem(spec, (slice(None), 0))
    im = nn.getitem(spec, (slice(None), 1))
    return nn.tsqrt(nn.add(nn.add(nn.mul(re, re), nn.mul(im, im)), 1e-12))


def multires_stft_loss(estimate: Tensor, reference: Tensor,
                       cfg: StftLossConfig = StftLossConfig()) -> Tensor:
    """Sum over resolutions of spectral convergence + log-magnitude L1.

    Non-negative, and exactly zero when estimate == reference.
    """
    total = None
    for fft_size, hop in zip(cfg.fft_sizes, cfg.hops):
        window = _hann(fft_size)
        est_mag = _magnitude(estimate, fft_size, hop, window)
        ref_mag = _magnitude(reference, fft_size, hop, window)
        diff = nn.sub(ref_mag, est_mag)
        # The guard keeps the sqrt gradient finite at perfect equality;
        # subtracting sqrt(guard) keeps the term exactly zero there (the two
        # np.sqrt calls see bitwise-identical operands) and non-negative
        # everywhere else.
        guard = 1e-24
        sc_num = nn.sub(nn.tsqrt(nn.add(nn.tsum(nn.mul(diff, diff)), guard)),
                        float(np.sqrt(guard)))
        sc_den = nn.tsqrt(nn.add(nn.tsum(nn.mul(ref_mag, ref_mag)), guard))
        sc = nn.mul(sc_num, nn.reciprocal(sc_den))
        log_l1 = nn.tmean(nn.tabs(nn.sub(
            nn.tlog(nn.add(ref_mag, cfg.mag_floor)),
            nn.tlog(nn.add(est_mag, cfg.mag_floor)))))
        term = nn.add(sc, log_l1)
        total = term if total is None else nn.add(total, term)
    return total


def demucs_loss(estimate: Tensor, reference: Tensor,
                stft_cfg: StftLossConfig = StftLossConfig()) -> Tensor:
    """Time-domain L1 (mean over batch and samples) + multi-res STFT loss."""
    if estimate.data.shape != reference.data.shape:
        raise ValueError("estimate and reference shapes differ")
    l1 = nn.tmean(nn.tabs(nn.sub(estimate, reference)))
    return nn.add(l1, multires_stft_loss(estimate, reference, stft_cfg))


def dccrn_loss(estimate: Tensor, reference: Tensor,
               lambda_si: float = -0.2, lambda_stft: float = 1.0,
               eps: float = 1e-8, si_denominator: str = "residual",
               stft_cfg: StftLossConfig = StftLossConfig()) -> Tensor:
    """lambda_si * SI-SNR(dB) + lambda_stft * multi-res STFT loss.

    Per batch item, with y_t the projection of the estimate onto the
    reference:

        si = 10 * log10((||y_t||^2 + eps) / (||e||^2 + eps))

    where e = estimate - reference ('residual', the default) or
    e = estimate - y_t ('projected', the conventional SI-SNR denominator).
    With lambda_si negative, a better estimate lowers the loss.
    """
    if estimate.data.shape != reference.data.shape:
        raise ValueError("estimate and reference shapes differ")
    if si_denominator not in ("residual", "projected"):
        raise ValueError(f"unknown si_denominator {si_denominator!r}")

    dot = nn.tsum(nn.mul(estimate, reference), axis=1)            # [B]
    ref_sq = nn.tsum(nn.mul(reference, reference), axis=1)        # [B]
    # ||y_t||^2 = dot^2 / ||y||^2; the tiny guard keeps the projection
    # defined (as zero) for silent references without shifting the printed
    # formula at any realistic signal level
    ref_sq_safe = nn.add(ref_sq, 1e-12)
    target_sq = nn.mul(nn.mul(dot, dot), nn.reciprocal(ref_sq_safe))
    if si_denominator == "residual":
        err = nn.sub(estimate, reference)
        err_sq = nn.tsum(nn.mul(err, err), axis=1)
    else:
        scale = nn.mul(dot, nn.reciprocal(ref_sq_safe))           # [B]
        target = nn.mul(reference, nn.reshape(scale, (-1, 1)))
        err = nn.sub(estimate, target)
        err_sq = nn.tsum(nn.mul(err, err), axis=1)
    ratio = nn.mul(nn.add(target_sq, eps), nn.reciprocal(nn.add(err_sq, eps)))
    si_db = nn.mul(nn.tlog(ratio), 10.0 / _LN10)
    si_term = nn.mul(nn.tmean(si_db), lambda_si)
    stft_term = nn.mul(multires_stft_loss(estimate, reference, stft_cfg), lambda_stft)
    return nn.add(si_term, stft_term)
