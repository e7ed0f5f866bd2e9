"""Toy complex-spectrogram denoiser with concat fusion.

Complex conv encoder/decoder over STFT maps (DC bin dropped so the
frequency axis halves cleanly through the stride-2 chain), a complex LSTM
bottleneck, and a tanh-bounded complex ratio mask applied to the noisy
spectrogram.  The ultrasound branch STFTs each baseband channel with the
same analysis settings and runs a shorter complex encoder whose first layer
uses a stride-4 frequency step, so both branches arrive at identical
(F', T') maps and fuse by channel-axis concatenation before the LSTM.

Time convolutions are causal (kernel 2, left pad 1); transposed decoder
convs grow one extra frame that is trimmed from the right, keeping every
layer's frame count equal to the input's.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import nn
from ..nn import functional as F
from ..nn.complexops import (CTensor, cabs, cconcat, cconv2d,
                             cconv_transpose2d, clinear, clstm, cmul)
from ..nn.tensor import Tensor

__all__ = ["DccrnConfig", "DccrnDenoiser", "encoder_freq_chain"]


@dataclass(frozen=True)
class DccrnConfig:
    fft_size: int = 512
    hop: int = 128
    speech_channels: tuple[int, ...] = (8, 16, 32, 64, 64, 64)
    kernel: tuple[int, int] = (5, 2)
    stride_freq: int = 2
    lstm_hidden: int = 128
    lstm_layers: int = 2
    fused: bool = False
    feature_channels: int = 4
    ultra_channels: tuple[int, ...] = (8, 16, 32, 64, 64)
    ultra_first_stride_freq: int = 4
    mask_eps: float = 1e-8
    dtype: str = "float32"

    def __post_init__(self):
        if self.fft_size < 64 or self.fft_size & (self.fft_size - 1):
            raise ValueError(f"fft_size must be a power of two >= 64, got {self.fft_size}")
        if not 0 < self.hop <= self.fft_size:
            raise ValueError(f"hop must be in (0, fft_size], got {self.hop}")
        speech_down = self.stride_freq ** len(self.speech_channels)
        ultra_down = (self.ultra_first_stride_freq
                      * self.stride_freq ** (len(self.ultra_channels) - 1))
        if speech_down != ultra_down:
            raise ValueError(
                "total frequency downsampling must match across branches "
                f"({speech_down} != {ultra_down})")
        if self.fft_size // 2 < speech_down:
            raise ValueError("frequency axis collapses before the last layer")

    @property
    def net_bins(self) -> int:
        """Frequency bins seen by the conv stack (DC dropped)."""
        return self.fft_size // 2


def encoder_freq_chain(bins: int, strides: list[int], kernel_f: int,
                       pad_f: int) -> list[int]:
    """Frequency sizes after each conv layer (oracle for the toy geometry:
    with kernel 5, pad 2 the rule is floor((F - 1) / s) + 1)."""
    out = []
    f = bins
    for s in strides:
        f = (f + 2 * pad_f - kernel_f) // s + 1
        out.append(f)
    return out


class _CConv(nn.Module):
    """Complex conv (+ optional PReLU shared between parts)."""

    def __init__(self, cin, cout, kernel, stride, rng, dtype, act: bool = True):
        super().__init__()
        kf, kt = kernel
        fan = cin * kf * kt
        self.stride = stride
        self.act = act
        self.wr = nn.Parameter(nn.fan_in_uniform(rng, (cout, cin, kf, kt), fan, dtype))
        self.wi = nn.Parameter(nn.fan_in_uniform(rng, (cout, cin, kf, kt), fan, dtype))
        self.br = nn.Parameter(nn.fan_in_uniform(rng, (cout,), fan, dtype))
        self.bi = nn.Parameter(nn.fan_in_uniform(rng, (cout,), fan, dtype))
        if act:
            self.alpha = nn.Parameter(np.full((), 0.25, dtype=dtype))

    def forward(self, x: CTensor, pad) -> CTensor:
        out = cconv2d(x, self.wr, self.wi, self.br, self.bi,
                      stride=self.stride, pad=pad)
        if self.act:
            out = CTensor(nn.prelu(out.re, self.alpha), nn.prelu(out.im, self.alpha))
        return out


class _CConvT(nn.Module):
    def __init__(self, cin, cout, kernel, stride, rng, dtype, act: bool = True):
        super().__init__()
        kf, kt = kernel
        fan = cin * kf * kt
        self.stride = stride
        self.act = act
        self.wr = nn.Parameter(nn.fan_in_uniform(rng, (cin, cout, kf, kt), fan, dtype))
        self.wi = nn.Parameter(nn.fan_in_uniform(rng, (cin, cout, kf, kt), fan, dtype))
        self.br = nn.Parameter(nn.fan_in_uniform(rng, (cout,), fan, dtype))
        self.bi = nn.Parameter(nn.fan_in_uniform(rng, (cout,), fan, dtype))
        if act:
            self.alpha = nn.Parameter(np.full((), 0.25, dtype=dtype))

    def forward(self, x: CTensor, output_padding) -> CTensor:
        out = cconv_transpose2d(x, self.wr, self.wi, self.br, self.bi,
                                stride=self.stride, output_padding=output_padding)
        if self.act:
            out = CTensor(nn.prelu(out.re, self.alpha), nn.prelu(out.im, self.alpha))
        return out


class _CLstmLayer(nn.Module):
    def __init__(self, din, hidden, rng, dtype):
        super().__init__()
        for part in ("r", "i"):
            wx = nn.Parameter(nn.fan_in_uniform(rng, (4 * hidden, din), hidden, dtype))
            wh = nn.Parameter(nn.fan_in_uniform(rng, (4 * hidden, hidden), hidden, dtype))
            b = nn.Parameter(nn.fan_in_uniform(rng, (4 * hidden,), hidden, dtype))
            setattr(self, f"wx_{part}", wx)
            setattr(self, f"wh_{part}", wh)
            setattr(self, f"b_{part}", b)

    def forward(self, x: CTensor) -> CTensor:
        return clstm(x, self.wx_r, self.wh_r, self.b_r,
                     self.wx_i, self.wh_i, self.b_i)


class DccrnDenoiser(nn.Module):
    """Complex ratio-mask denoiser; `fused=True` adds the ultrasound branch."""

    def __init__(self, cfg: DccrnConfig = DccrnConfig(), seed: int = 0):
        super().__init__()
        self.cfg = cfg
        dtype = np.dtype(cfg.dtype)
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x444352]))
        self._window = _hann(cfg.fft_size)

        chans = list(cfg.speech_channels)
        enc = []
        cin = 1
        for c in chans:
            enc.append(_CConv(cin, c, cfg.kernel, (cfg.stride_freq, 1), rng, dtype))
            cin = c
        self.encoder = nn.ModuleList(enc)

        dec = []
        rev = [1] + chans[:-1]
        for i in range(len(chans) - 1, -1, -1):
            dec.append(_CConvT(2 * chans[i], rev[i], cfg.kernel,
                               (cfg.stride_freq, 1), rng, dtype, act=(i != 0)))
        self.decoder = nn.ModuleList(dec)

        bottleneck_f = cfg.net_bins // (cfg.stride_freq ** len(chans))
        lstm_in = chans[-1] * bottleneck_f
        if cfg.fused:
            lstm_in += cfg.ultra_channels[-1] * bottleneck_f
        layers = []
        for i in range(cfg.lstm_layers):
            layers.append(_CLstmLayer(lstm_in if i == 0 else cfg.lstm_hidden,
                                      cfg.lstm_hidden, rng, dtype))
        self.lstm = nn.ModuleList(layers)
        out_dim = chans[-1] * bottleneck_f
        self.out_wr = nn.Parameter(nn.fan_in_uniform(rng, (out_dim, cfg.lstm_hidden),
                                                     cfg.lstm_hidden, dtype))
        self.out_wi = nn.Parameter(nn.fan_in_uniform(rng, (out_dim, cfg.lstm_hidden),
                                                     cfg.lstm_hidden, dtype))
        self.out_br = nn.Parameter(nn.fan_in_uniform(rng, (out_dim,),
                                                     cfg.lstm_hidden, dtype))
        self.out_bi = nn.Parameter(nn.fan_in_uniform(rng, (out_dim,),
                                                     cfg.lstm_hidden, dtype))
        self._bottleneck = (chans[-1], bottleneck_f)

        if cfg.fused:
            uenc = []
            ucin = cfg.feature_channels
            for i, c in enumerate(cfg.ultra_channels):
                sf = cfg.ultra_first_stride_freq if i == 0 else cfg.stride_freq
                uenc.append(_CConv(ucin, c, cfg.kernel, (sf, 1), rng, dtype))
                ucin = c
            self.ultra_encoder = nn.ModuleList(uenc)

    # -- STFT plumbing -------------------------------------------------------

    def _pad_amounts(self, t: int) -> tuple[int, int, int]:
        """(left, right, frames): pad fft on the left, right to frame-exact
        coverage of t + 2*fft samples."""
        fft, hop = self.cfg.fft_size, self.cfg.hop
        min_len = t + 2 * fft
        frames = int(np.ceil((min_len - fft) / hop)) + 1
        total = (frames - 1) * hop + fft
        return fft, total - fft - t, frames

    def _spectrum(self, x: Tensor) -> CTensor:
        """[B*C, T_pad] -> complex [B*C, 1, F_net, Tf] with the DC row dropped."""
        spec = F.stft_c(x, self.cfg.fft_size, self.cfg.hop, self._window)
        re = nn.getitem(spec, (slice(None), 0, slice(1, None), slice(None)))
        im = nn.getitem(spec, (slice(None), 1, slice(1, None), slice(None)))
        b, f, tf = re.data.shape
        return CTensor(nn.reshape(re, (b, 1, f, tf)), nn.reshape(im, (b, 1, f, tf)))

    def _encode(self, x: CTensor, layers) -> tuple[CTensor, list[CTensor]]:
        kf, kt = self.cfg.kernel
        pad_f = (kf - 1) // 2
        skips = []
        for layer in layers:
            x = layer.forward(x, pad=(pad_f, pad_f, kt - 1, 0))
            skips.append(x)
        return x, skips

    def ultrasound_encode(self, features: Tensor) -> CTensor:
        """Complex embedding of the baseband I/Q stack, aligned frame-for-frame
        with the speech encoder bottleneck for the same signal length."""
        if not self.cfg.fused:
            raise ValueError("ultrasound_encode requires a fused model")
        if features.data.ndim != 3:
            raise ValueError(f"expected features [B, C, T], got {features.data.shape}")
        b, cf, t = features.data.shape
        if cf != self.cfg.feature_channels:
            raise ValueError(f"expected {self.cfg.feature_channels} feature "
                             f"channels, got {cf}")
        left, right, _ = self._pad_amounts(t)
        f_pad = nn.pad_last(features, left, right)
        f_flat = nn.reshape(f_pad, (b * cf, f_pad.data.shape[-1]))
        uspec = self._spectrum(f_flat)
        _, _, f_net, tf = uspec.re.data.shape
        ure = nn.reshape(uspec.re, (b, cf, f_net, tf))
        uim = nn.reshape(uspec.im, (b, cf, f_net, tf))
        uenc, _ = self._encode(CTensor(ure, uim), self.ultra_encoder)
        return uenc

    def forward(self, noisy: Tensor, features: Tensor | None = None) -> Tensor:
        cfg = self.cfg
        if noisy.data.ndim != 2:
            raise ValueError(f"expected noisy [B, T], got {noisy.data.shape}")
        if cfg.fused and features is None:
            raise ValueError("fused model requires a feature stack")
        b, t = noisy.data.shape
        left, right, frames = self._pad_amounts(t)
        x_pad = nn.pad_last(noisy, left, right)

        spec = self._spectrum(x_pad)                        # [B, 1, F_net, Tf]
        enc, skips = self._encode(spec, self.encoder)

        if cfg.fused:
            if features.data.shape[0] != b or features.data.shape[-1] != t:
                raise ValueError("features must match the noisy batch and length")
            uenc = self.ultrasound_encode(features)
            if uenc.re.data.shape[2:] != enc.re.data.shape[2:]:
                raise RuntimeError("branch feature maps misaligned")
            enc = cconcat([enc, uenc], axis=1)

        c, fb = enc.re.data.shape[1], enc.re.data.shape[2]
        tf = enc.re.data.shape[3]
        flat = CTensor(
            nn.reshape(nn.transpose(enc.re, (0, 3, 1, 2)), (b, tf, c * fb)),
            nn.reshape(nn.transpose(enc.im, (0, 3, 1, 2)), (b, tf, c * fb)))
        h = flat
        for layer in self.lstm:
            h = layer.forward(h)
        h = clinear(h, self.out_wr, self.out_wi, self.out_br, self.out_bi)
        c_out, f_out = self._bottleneck
        x = CTensor(
            nn.transpose(nn.reshape(h.re, (b, tf, c_out, f_out)), (0, 2, 3, 1)),
            nn.transpose(nn.reshape(h.im, (b, tf, c_out, f_out)), (0, 2, 3, 1)))

        kf = cfg.kernel[0]
        pad_f = (kf - 1) // 2
        for i, layer in enumerate(self.decoder):
            x = cconcat([x, skips[len(skips) - 1 - i]], axis=1)
            x = layer.forward(x, output_padding=(1, 0))
            # undo the frequency padding and drop the extra (future) frame
            crop = (Ellipsis, slice(pad_f, x.re.data.shape[2] - pad_f),
                    slice(0, x.re.data.shape[-1] - 1))
            x = CTensor(nn.getitem(x.re, crop), nn.getitem(x.im, crop))

        # tanh-bounded complex ratio mask
        mag = cabs(x, eps=1e-12)
        scale = nn.mul(nn.ttanh(mag), nn.reciprocal(nn.add(mag, cfg.mask_eps)))
        mask = CTensor(nn.mul(x.re, scale), nn.mul(x.im, scale))
        est = cmul(mask, spec)

        est_re = nn.reshape(est.re, (b, est.re.data.shape[2], tf))
        est_im = nn.reshape(est.im, (b, est.im.data.shape[2], tf))
        zeros = Tensor(np.zeros((b, 1, tf), dtype=noisy.data.dtype))
        full_re = nn.concat([zeros, est_re], axis=1)
        full_im = nn.concat([zeros, est_im], axis=1)
        stacked = nn.concat([
            nn.reshape(full_re, (b, 1, cfg.fft_size // 2 + 1, tf)),
            nn.reshape(full_im, (b, 1, cfg.fft_size // 2 + 1, tf))], axis=1)
        y = F.istft_c(stacked, cfg.fft_size, cfg.hop, self._window)
        return nn.getitem(y, (slice(None), slice(left, left + t)))


def _hann(n: int) -> np.ndarray:
    k = np.arange(n)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * k / n)
