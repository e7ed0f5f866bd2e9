"""Toy waveform U-Net denoiser with an ultrasound masking-fusion branch.

Encoder/decoder mirror with additive skips and a causal LSTM bottleneck.
The ultrasound branch runs its own strided encoder over the I/Q baseband
stack; its embedding gates the speech embedding through a sigmoid mask,

    X_s' = X_s * sigmoid(X_u W^T + b),

after which [X_s', X_s] are concatenated and linearly projected back to the
bottleneck width.  Both branches are right-padded to a shared valid length
so they emit exactly the same number of bottleneck frames for any input
length.  No input normalisation is applied anywhere: the network is
streamable with a fixed receptive tail.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import nn
from ..nn import functional as F
from ..nn.tensor import Tensor

__all__ = ["DemucsConfig", "DemucsDenoiser", "MaskFusion",
           "speech_valid_length", "ultrasound_valid_length", "bottleneck_frames"]


@dataclass(frozen=True)
class DemucsConfig:
    depth: int = 5
    base_channels: int = 16
    max_channels: int = 128
    kernel: int = 8
    stride: int = 4
    growth: int = 2
    lstm_layers: int = 2
    resample_factor: int = 1          # U; both branches are upsampled identically
    fused: bool = False
    feature_channels: int = 4
    ultra_depth: int = 3
    ultra_base: int = 24
    ultra_kernel: int = 10
    ultra_strides: tuple[int, ...] = (16, 8, 8)
    ultra_growth: int = 2
    dtype: str = "float32"

    def __post_init__(self):
        if self.resample_factor not in (1, 2, 4):
            raise ValueError(f"resample factor must be 1, 2 or 4, got {self.resample_factor}")
        if len(self.ultra_strides) != self.ultra_depth:
            raise ValueError("one ultrasound stride per ultrasound layer")
        if int(np.prod(self.ultra_strides)) != self.stride ** self.depth:
            raise ValueError(
                "ultrasound stride product must match the speech branch "
                f"({np.prod(self.ultra_strides)} != {self.stride ** self.depth})")

    def speech_channels(self) -> list[int]:
        return [min(self.base_channels * self.growth ** i, self.max_channels)
                for i in range(self.depth)]

    def ultra_channels(self) -> list[int]:
        return [self.ultra_base * self.ultra_growth ** i for i in range(self.ultra_depth)]


def _chain_valid_length(frames: int, kernels: list[int], strides: list[int]) -> int:
    """Input length that maps exactly to `frames` bottleneck steps through a
    chain of valid convolutions (inverted back-to-front)."""
    length = frames
    for k, s in zip(reversed(kernels), reversed(strides)):
        length = (length - 1) * s + k
    return length


def speech_valid_length(frames: int, cfg: DemucsConfig) -> int:
    return _chain_valid_length(frames, [cfg.kernel] * cfg.depth, [cfg.stride] * cfg.depth)


def ultrasound_valid_length(frames: int, cfg: DemucsConfig) -> int:
    return _chain_valid_length(frames, [cfg.ultra_kernel] * cfg.ultra_depth,
                               list(cfg.ultra_strides))


def bottleneck_frames(n_samples: int, cfg: DemucsConfig) -> int:
    """Shared bottleneck frame count for an input of `n_samples` (after any
    resampling): the smallest count whose valid lengths cover the input on
    *both* branches."""
    frames = 1
    hop = cfg.stride ** cfg.depth
    shorter = min(speech_valid_length(1, cfg), ultrasound_valid_length(1, cfg))
    if n_samples > shorter:
        frames = 1 + int(np.ceil((n_samples - shorter) / hop))
    return frames


class _EncLayer(nn.Module):
    def __init__(self, cin, cout, kernel, stride, rng, dtype):
        super().__init__()
        self.stride = stride
        self.w = nn.Parameter(nn.fan_in_uniform(rng, (cout, cin, kernel), cin * kernel, dtype))
        self.b = nn.Parameter(nn.fan_in_uniform(rng, (cout,), cin * kernel, dtype))
        self.w1 = nn.Parameter(nn.fan_in_uniform(rng, (2 * cout, cout, 1), cout, dtype))
        self.b1 = nn.Parameter(nn.fan_in_uniform(rng, (2 * cout,), cout, dtype))

    def forward(self, x: Tensor) -> Tensor:
        x = nn.relu(F.conv1d(x, self.w, self.b, stride=self.stride))
        return nn.glu(F.conv1d(x, self.w1, self.b1), axis=1)


class _DecLayer(nn.Module):
    def __init__(self, cin, cout, kernel, stride, rng, dtype, last: bool):
        super().__init__()
        self.stride = stride
        self.last = last
        self.w1 = nn.Parameter(nn.fan_in_uniform(rng, (2 * cin, cin, 1), cin, dtype))
        self.b1 = nn.Parameter(nn.fan_in_uniform(rng, (2 * cin,), cin, dtype))
        self.wt = nn.Parameter(nn.fan_in_uniform(rng, (cin, cout, kernel), cin * kernel, dtype))
        self.bt = nn.Parameter(nn.fan_in_uniform(rng, (cout,), cin * kernel, dtype))

    def forward(self, x: Tensor) -> Tensor:
        x = nn.glu(F.conv1d(x, self.w1, self.b1), axis=1)
        x = F.conv_transpose1d(x, self.wt, self.bt, stride=self.stride)
        return x if self.last else nn.relu(x)


class MaskFusion(nn.Module):
    """Sigmoid gating of the speech embedding by the ultrasound embedding,
    then concat + linear projection back to the bottleneck width."""

    def __init__(self, c_speech: int, c_ultra: int, rng, dtype):
        super().__init__()
        self.gate_w = nn.Parameter(nn.fan_in_uniform(rng, (c_speech, c_ultra), c_ultra, dtype))
        self.gate_b = nn.Parameter(nn.fan_in_uniform(rng, (c_speech,), c_ultra, dtype))
        # identity-on-the-skip projection: at init the fusion output equals
        # X_s exactly, so a fused model warm-started from a baseline
        # checkpoint starts as the baseline function and grows the masked
        # path from zero (the gate still gets gradient through proj_w)
        proj = np.concatenate([np.zeros((c_speech, c_speech)),
                               np.eye(c_speech)], axis=1).astype(dtype)
        self.proj_w = nn.Parameter(proj)
        self.proj_b = nn.Parameter(np.zeros(c_speech, dtype=dtype))

    def mask(self, xu: Tensor) -> Tensor:
        """sigmoid(X_u W^T + b) on [B, T, C_u] -> [B, T, C_s]."""
        return nn.sigmoid(nn.linear(xu, self.gate_w, self.gate_b))

    def masked(self, xs: Tensor, xu: Tensor) -> Tensor:
        """X_s' on time-major embeddings [B, T, C]."""
        return nn.mul(xs, self.mask(xu))

    def forward(self, xs: Tensor, xu: Tensor) -> Tensor:
        masked = self.masked(xs, xu)
        return nn.linear(nn.concat([masked, xs], axis=2), self.proj_w, self.proj_b)


class _LstmStack(nn.Module):
    def __init__(self, dim, hidden, layers, rng, dtype):
        super().__init__()
        mods = []
        for i in range(layers):
            d = dim if i == 0 else hidden
            layer = nn.Module()
            layer.wx = nn.Parameter(nn.fan_in_uniform(rng, (4 * hidden, d), hidden, dtype))
            layer.wh = nn.Parameter(nn.fan_in_uniform(rng, (4 * hidden, hidden), hidden, dtype))
            layer.b = nn.Parameter(nn.fan_in_uniform(rng, (4 * hidden,), hidden, dtype))
            mods.append(layer)
        self.layers = nn.ModuleList(mods)

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = F.lstm(x, layer.wx, layer.wh, layer.b)
        return x


def _sinc_kernel(taps: int, dtype) -> np.ndarray:
    """Half-sample windowed-sinc interpolator (odd length 2*taps-1 zeros at
    integer offsets removed: evaluated at half-integers)."""
    t = np.arange(-taps + 0.5, taps, 1.0)
    kernel = np.sinc(t) * np.hanning(2 * taps)
    return (kernel / kernel.sum()).astype(dtype)


class DemucsDenoiser(nn.Module):
    """Waveform denoiser; `fused=True` adds the ultrasound branch."""

    def __init__(self, cfg: DemucsConfig = DemucsConfig(), seed: int = 0):
        super().__init__()
        self.cfg = cfg
        dtype = np.dtype(cfg.dtype)
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x444D58]))

        chans = cfg.speech_channels()
        enc, dec = [], []
        cin = 1
        for i, c in enumerate(chans):
            enc.append(_EncLayer(cin, c, cfg.kernel, cfg.stride, rng, dtype))
            cin = c
        for i in range(cfg.depth - 1, -1, -1):
            cout = 1 if i == 0 else chans[i - 1]
            dec.append(_DecLayer(chans[i], cout, cfg.kernel, cfg.stride, rng, dtype,
                                 last=(i == 0)))
        self.encoder = nn.ModuleList(enc)
        self.decoder = nn.ModuleList(dec)
        self.lstm = _LstmStack(chans[-1], chans[-1], cfg.lstm_layers, rng, dtype)

        if cfg.fused:
            uchans = cfg.ultra_channels()
            uenc = []
            ucin = cfg.feature_channels
            for c, s in zip(uchans, cfg.ultra_strides):
                uenc.append(_EncLayer(ucin, c, cfg.ultra_kernel, s, rng, dtype))
                ucin = c
            self.ultra_encoder = nn.ModuleList(uenc)
            self.fusion = MaskFusion(chans[-1], uchans[-1], rng, dtype)

        self._upsample_kernel = _sinc_kernel(16, dtype)

    # -- fixed-rate resampling by 2, built from tape ops --------------------

    def _upsample2(self, x: Tensor) -> Tensor:
        b, c, t = x.data.shape
        flat = nn.reshape(x, (b * c, 1, t))
        taps = len(self._upsample_kernel) // 2 + 1
        padded = nn.pad_last(flat, taps - 1, taps - 1)
        w = Tensor(self._upsample_kernel.reshape(1, 1, -1))
        mid = F.conv1d(padded, w)
        mid = nn.getitem(mid, (slice(None), slice(None), slice(0, t)))
        out = F.interleave2(flat, mid)
        return nn.reshape(out, (b, c, 2 * t))

    def _downsample2(self, x: Tensor) -> Tensor:
        b, c, t2 = x.data.shape
        even = nn.getitem(x, (Ellipsis, slice(0, None, 2)))
        odd = nn.getitem(x, (Ellipsis, slice(1, None, 2)))
        flat = nn.reshape(odd, (b * c, 1, t2 // 2))
        taps = len(self._upsample_kernel) // 2 + 1
        padded = nn.pad_last(flat, taps - 1, taps - 1)
        w = Tensor(self._upsample_kernel.reshape(1, 1, -1))
        interp = F.conv1d(padded, w)
        interp = nn.getitem(interp, (slice(None), slice(None), slice(0, t2 // 2)))
        interp = nn.reshape(interp, (b, c, t2 // 2))
        return nn.mul(nn.add(even, interp), 0.5)

    def ultrasound_encode(self, features: Tensor, frames: int) -> Tensor:
        """Encode a [B, Cf, T] baseband stack into [B, C_u, frames]."""
        target = ultrasound_valid_length(frames, self.cfg)
        t = features.data.shape[-1]
        if t > target:
            raise ValueError(f"feature length {t} exceeds valid length {target}")
        u = nn.pad_last(features, 0, target - t)
        for layer in self.ultra_encoder:
            u = layer.forward(u)
        return u

    def forward(self, noisy: Tensor, features: Tensor | None = None) -> Tensor:
        if noisy.data.ndim != 2:
            raise ValueError(f"expected noisy [B, T], got {noisy.data.shape}")
        if self.cfg.fused and features is None:
            raise ValueError("fused model requires a feature stack")
        b, t = noisy.data.shape
        x = nn.reshape(noisy, (b, 1, t))

        u = None
        if self.cfg.fused:
            if features.data.shape[0] != b or features.data.shape[-1] != t:
                raise ValueError("features must match the noisy batch and length")
            u = features

        factor = self.cfg.resample_factor
        doublings = int(np.log2(factor))
        for _ in range(doublings):
            x = self._upsample2(x)
            if u is not None:
                u = self._upsample2(u)

        t_up = t * factor
        frames = bottleneck_frames(t_up, self.cfg)
        x = nn.pad_last(x, 0, speech_valid_length(frames, self.cfg) - t_up)

        skips = []
        for layer in self.encoder:
            x = layer.forward(x)
            skips.append(x)

        x = nn.transpose(x, (0, 2, 1))                  # [B, T_e, C]
        if self.cfg.fused:
            xu = nn.transpose(self.ultrasound_encode(u, frames), (0, 2, 1))
            x = self.fusion.forward(x, xu)
        x = self.lstm.forward(x)
        x = nn.transpose(x, (0, 2, 1))

        for layer in self.decoder:
            x = nn.add(x, skips.pop())
            x = layer.forward(x)

        x = nn.getitem(x, (slice(None), slice(None), slice(0, t_up)))
        for _ in range(doublings):
            x = self._downsample2(x)
        x = nn.getitem(x, (slice(None), slice(None), slice(0, t)))
        return nn.reshape(x, (b, t))
