"""Fused neural ops: convolutions, LSTM, and STFT primitives.

Convolutions lower to GEMM through strided im2col views; their adjoints are
the matching col2im scatters, so forward and backward share one pair of
layout helpers.  The STFT/iSTFT ops use the rfft half-spectrum adjoint
directly instead of materialising DFT matrices.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .tensor import Tensor, _accumulate, _node

__all__ = [
    "conv1d", "conv_transpose1d", "conv2d", "conv_transpose2d",
    "lstm", "stft_c", "istft_c", "interleave2",
]


# ---------------------------------------------------------------------------
# layout helpers (read-only strided views + their scatter adjoints)
# ---------------------------------------------------------------------------

def _im2col1d(x: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    """[B, C, T] -> view [B, C, To, K] of sliding windows."""
    b, c, t = x.shape
    if t < kernel:
        raise ValueError(f"input length {t} shorter than kernel {kernel}")
    to = (t - kernel) // stride + 1
    sb, sc, st = x.strides
    return as_strided(x, shape=(b, c, to, kernel),
                      strides=(sb, sc, st * stride, st))


def _col2im1d(cols: np.ndarray, stride: int, out_t: int) -> np.ndarray:
    """Scatter-add [B, C, To, K] windows into [B, C, out_t]."""
    b, c, to, k = cols.shape
    out = np.zeros((b, c, out_t), dtype=cols.dtype)
    for kk in range(k):
        out[:, :, kk:kk + (to - 1) * stride + 1:stride] += cols[:, :, :, kk]
    return out


def _im2col2d(x: np.ndarray, kf: int, kt: int, sf: int, st: int,
              fo: int | None = None, to: int | None = None) -> np.ndarray:
    """[B, C, F, T] -> view [B, C, Fo, To, KF, KT]."""
    b, c, f, t = x.shape
    if fo is None:
        fo = (f - kf) // sf + 1
    if to is None:
        to = (t - kt) // st + 1
    if fo < 1 or to < 1:
        raise ValueError(f"kernel ({kf},{kt}) does not fit input ({f},{t})")
    xb, xc, xf, xt = x.strides
    return as_strided(x, shape=(b, c, fo, to, kf, kt),
                      strides=(xb, xc, xf * sf, xt * st, xf, xt))


def _col2im2d(cols: np.ndarray, sf: int, st: int, out_f: int, out_t: int) -> np.ndarray:
    """Scatter-add [B, C, Fo, To, KF, KT] windows into [B, C, out_f, out_t]."""
    b, c, fo, to, kf, kt = cols.shape
    out = np.zeros((b, c, out_f, out_t), dtype=cols.dtype)
    for i in range(kf):
        for j in range(kt):
            out[:, :, i:i + (fo - 1) * sf + 1:sf,
                j:j + (to - 1) * st + 1:st] += cols[:, :, :, :, i, j]
    return out


# ---------------------------------------------------------------------------
# 1-D convolutions
# ---------------------------------------------------------------------------

def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1) -> Tensor:
    """Valid cross-correlation.  x [B, Ci, T], w [Co, Ci, K] -> [B, Co, To]."""
    bsz, ci, t = x.data.shape
    co, ci_w, k = w.data.shape
    if ci != ci_w:
        raise ValueError(f"channel mismatch: input {ci}, weight {ci_w}")
    cols = _im2col1d(x.data, k, stride)                       # [B, Ci, To, K]
    to = cols.shape[2]
    cols2 = np.ascontiguousarray(cols.transpose(0, 2, 1, 3)).reshape(bsz * to, ci * k)
    w2 = w.data.reshape(co, ci * k)
    out = cols2 @ w2.T                                        # [B*To, Co]
    if b is not None:
        out = out + b.data
    data = np.ascontiguousarray(out.reshape(bsz, to, co).transpose(0, 2, 1))

    def backward(g):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 1)).reshape(bsz * to, co)
        _accumulate(w, (g2.T @ cols2).reshape(co, ci, k))
        if b is not None:
            _accumulate(b, g2.sum(axis=0))
        dcols = (g2 @ w2).reshape(bsz, to, ci, k).transpose(0, 2, 1, 3)
        _accumulate(x, _col2im1d(dcols, stride, t))

    parents = (x, w) if b is None else (x, w, b)
    return _node(data, parents, backward)


def conv_transpose1d(x: Tensor, w: Tensor, b: Tensor | None = None,
                     stride: int = 1) -> Tensor:
    """Transposed conv.  x [B, Ci, T], w [Ci, Co, K] -> [B, Co, (T-1)*stride+K]."""
    bsz, ci, t = x.data.shape
    ci_w, co, k = w.data.shape
    if ci != ci_w:
        raise ValueError(f"channel mismatch: input {ci}, weight {ci_w}")
    out_t = (t - 1) * stride + k
    x2 = np.ascontiguousarray(x.data.transpose(0, 2, 1)).reshape(bsz * t, ci)
    w2 = w.data.reshape(ci, co * k)
    prod = (x2 @ w2).reshape(bsz, t, co, k).transpose(0, 2, 1, 3)   # [B, Co, T, K]
    data = _col2im1d(prod, stride, out_t)
    if b is not None:
        data += b.data[None, :, None]

    def backward(g):
        gcols = _im2col1d(g, k, stride)                       # [B, Co, T, K]
        gcols2 = np.ascontiguousarray(gcols.transpose(0, 2, 1, 3)).reshape(bsz * t, co * k)
        _accumulate(x, (gcols2 @ w2.T).reshape(bsz, t, ci).transpose(0, 2, 1))
        _accumulate(w, (x2.T @ gcols2).reshape(ci, co, k))
        if b is not None:
            _accumulate(b, g.sum(axis=(0, 2)))

    parents = (x, w) if b is None else (x, w, b)
    return _node(data, parents, backward)


# ---------------------------------------------------------------------------
# 2-D convolutions (frequency x time maps)
# ---------------------------------------------------------------------------

def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None,
           stride: tuple[int, int] = (1, 1),
           pad: tuple[int, int, int, int] = (0, 0, 0, 0)) -> Tensor:
    """x [B, Ci, F, T], w [Co, Ci, KF, KT]; pad = (f_lo, f_hi, t_lo, t_hi)."""
    sf, st = stride
    pf_lo, pf_hi, pt_lo, pt_hi = pad
    xp = x.data
    if any(pad):
        xp = np.pad(xp, ((0, 0), (0, 0), (pf_lo, pf_hi), (pt_lo, pt_hi)))
    bsz, ci, f, t = xp.shape
    co, ci_w, kf, kt = w.data.shape
    if ci != ci_w:
        raise ValueError(f"channel mismatch: input {ci}, weight {ci_w}")
    cols = _im2col2d(xp, kf, kt, sf, st)                      # [B, Ci, Fo, To, KF, KT]
    fo, to = cols.shape[2], cols.shape[3]
    cols2 = np.ascontiguousarray(cols.transpose(0, 2, 3, 1, 4, 5)) \
              .reshape(bsz * fo * to, ci * kf * kt)
    w2 = w.data.reshape(co, ci * kf * kt)
    out = cols2 @ w2.T
    if b is not None:
        out = out + b.data
    data = np.ascontiguousarray(out.reshape(bsz, fo, to, co).transpose(0, 3, 1, 2))

    def backward(g):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(bsz * fo * to, co)
        _accumulate(w, (g2.T @ cols2).reshape(co, ci, kf, kt))
        if b is not None:
            _accumulate(b, g2.sum(axis=0))
        dcols = (g2 @ w2).reshape(bsz, fo, to, ci, kf, kt).transpose(0, 3, 1, 2, 4, 5)
        dxp = _col2im2d(dcols, sf, st, f, t)
        if any(pad):
            dxp = dxp[:, :, pf_lo:f - pf_hi, pt_lo:t - pt_hi]
        _accumulate(x, dxp)

    parents = (x, w) if b is None else (x, w, b)
    return _node(data, parents, backward)


def conv_transpose2d(x: Tensor, w: Tensor, b: Tensor | None = None,
                     stride: tuple[int, int] = (1, 1),
                     output_padding: tuple[int, int] = (0, 0)) -> Tensor:
    """x [B, Ci, F, T], w [Ci, Co, KF, KT] -> [B, Co, (F-1)*sf+KF+of, ...]."""
    sf, st = stride
    of, ot = output_padding
    bsz, ci, f, t = x.data.shape
    ci_w, co, kf, kt = w.data.shape
    if ci != ci_w:
        raise ValueError(f"channel mismatch: input {ci}, weight {ci_w}")
    out_f = (f - 1) * sf + kf + of
    out_t = (t - 1) * st + kt + ot
    x2 = np.ascontiguousarray(x.data.transpose(0, 2, 3, 1)).reshape(bsz * f * t, ci)
    w2 = w.data.reshape(ci, co * kf * kt)
    prod = (x2 @ w2).reshape(bsz, f, t, co, kf, kt).transpose(0, 3, 1, 2, 4, 5)
    data = _col2im2d(prod, sf, st, out_f, out_t)
    if b is not None:
        data += b.data[None, :, None, None]

    def backward(g):
        gcols = _im2col2d(g, kf, kt, sf, st, fo=f, to=t)      # [B, Co, F, T, KF, KT]
        gcols2 = np.ascontiguousarray(gcols.transpose(0, 2, 3, 1, 4, 5)) \
                   .reshape(bsz * f * t, co * kf * kt)
        _accumulate(x, (gcols2 @ w2.T).reshape(bsz, f, t, ci).transpose(0, 3, 1, 2))
        _accumulate(w, (x2.T @ gcols2).reshape(ci, co, kf, kt))
        if b is not None:
            _accumulate(b, g.sum(axis=(0, 2, 3)))

    parents = (x, w) if b is None else (x, w, b)
    return _node(data, parents, backward)


# ---------------------------------------------------------------------------
# fused unidirectional LSTM
# ---------------------------------------------------------------------------

def lstm(x: Tensor, wx: Tensor, wh: Tensor, bias: Tensor) -> Tensor:
    """Single-layer LSTM over [B, T, D].  Gate blocks ordered (i, f, g, o);
    zero initial state; returns the hidden sequence [B, T, H]."""
    bsz, steps, din = x.data.shape
    four_h, din_w = wx.data.shape
    h = four_h // 4
    if din != din_w or wh.data.shape != (four_h, h) or bias.data.shape != (four_h,):
        raise ValueError("lstm weight shapes inconsistent with input")
    dtype = x.data.dtype

    xw = x.data.reshape(bsz * steps, din) @ wx.data.T
    xw = xw.reshape(bsz, steps, four_h) + bias.data

    h_seq = np.empty((steps, bsz, h), dtype=dtype)
    c_seq = np.empty((steps + 1, bsz, h), dtype=dtype)
    gates = np.empty((steps, bsz, four_h), dtype=dtype)
    tanh_c = np.empty((steps, bsz, h), dtype=dtype)
    c_seq[0] = 0.0
    h_prev = np.zeros((bsz, h), dtype=dtype)
    for t in range(steps):
        z = xw[:, t, :] + h_prev @ wh.data.T
        zi, zf, zg, zo = z[:, :h], z[:, h:2 * h], z[:, 2 * h:3 * h], z[:, 3 * h:]
        gi = 1.0 / (1.0 + np.exp(-zi))
        gf = 1.0 / (1.0 + np.exp(-zf))
        gg = np.tanh(zg)
        go = 1.0 / (1.0 + np.exp(-zo))
        c = gf * c_seq[t] + gi * gg
        tc = np.tanh(c)
        h_prev = go * tc
        gates[t, :, :h], gates[t, :, h:2 * h] = gi, gf
        gates[t, :, 2 * h:3 * h], gates[t, :, 3 * h:] = gg, go
        c_seq[t + 1] = c
        tanh_c[t] = tc
        h_seq[t] = h_prev
    data = np.ascontiguousarray(h_seq.transpose(1, 0, 2))

    def backward(g):
        dz_seq = np.empty((steps, bsz, four_h), dtype=dtype)
        dh_next = np.zeros((bsz, h), dtype=dtype)
        dc_next = np.zeros((bsz, h), dtype=dtype)
        for t in range(steps - 1, -1, -1):
            gi = gates[t, :, :h]
            gf = gates[t, :, h:2 * h]
            gg = gates[t, :, 2 * h:3 * h]
            go = gates[t, :, 3 * h:]
            tc = tanh_c[t]
            dh = g[:, t, :] + dh_next
            dc = dc_next + dh * go * (1.0 - tc * tc)
            dzi = dc * gg * gi * (1.0 - gi)
            dzf = dc * c_seq[t] * gf * (1.0 - gf)
            dzg = dc * gi * (1.0 - gg * gg)
            dzo = dh * tc * go * (1.0 - go)
            dz = np.concatenate([dzi, dzf, dzg, dzo], axis=1)
            dz_seq[t] = dz
            dh_next = dz @ wh.data
            dc_next = dc * gf
        dz2 = np.ascontiguousarray(dz_seq.transpose(1, 0, 2)).reshape(bsz * steps, four_h)
        _accumulate(x, (dz2 @ wx.data).reshape(bsz, steps, din))
        _accumulate(wx, dz2.T @ x.data.reshape(bsz * steps, din))
        h_prev_seq = np.concatenate(
            [np.zeros((1, bsz, h), dtype=dtype), h_seq[:-1]], axis=0)
        _accumulate(wh, dz_seq.reshape(steps * bsz, four_h).T
                    @ h_prev_seq.reshape(steps * bsz, h))
        _accumulate(bias, dz2.sum(axis=0))

    return _node(data, (x, wx, wh, bias), backward)


# ---------------------------------------------------------------------------
# STFT primitives (stacked real/imag layout [B, 2, F, Tf])
# ---------------------------------------------------------------------------

def _frame_view(x: np.ndarray, fft_size: int, hop: int) -> np.ndarray:
    b, n = x.shape
    if n < fft_size or (n - fft_size) % hop:
        raise ValueError(
            f"signal length {n} is not frame-exact for fft={fft_size}, hop={hop}")
    frames = (n - fft_size) // hop + 1
    sb, st = x.strides
    return as_strided(x, shape=(b, frames, fft_size), strides=(sb, st * hop, st))


def _rfft_adjoint(g_re: np.ndarray, g_im: np.ndarray, fft_size: int) -> np.ndarray:
    """Gradient of a real function of rfft(x) w.r.t. x, for x of length N."""
    h = (g_re + 1j * g_im).astype(np.complex128)
    h[..., 1:-1] *= 0.5
    h[..., 0] = g_re[..., 0]
    h[..., -1] = g_re[..., -1]
    return fft_size * np.fft.irfft(h, n=fft_size, axis=-1)


def stft_c(x: Tensor, fft_size: int, hop: int, window: np.ndarray) -> Tensor:
    """Windowed rfft of a frame-exact signal.  x [B, N] -> [B, 2, F, Tf]."""
    frames = _frame_view(x.data, fft_size, hop) * window
    spec = np.fft.rfft(frames, axis=-1)                       # [B, Tf, F]
    dtype = x.data.dtype
    data = np.stack([spec.real.transpose(0, 2, 1),
                     spec.imag.transpose(0, 2, 1)], axis=1).astype(dtype)

    def backward(g):
        g_re = g[:, 0].transpose(0, 2, 1)                     # [B, Tf, F]
        g_im = g[:, 1].transpose(0, 2, 1)
        dframes = _rfft_adjoint(g_re, g_im, fft_size) * window
        dx = np.zeros_like(x.data)
        n_frames = dframes.shape[1]
        for t in range(n_frames):
            dx[:, t * hop:t * hop + fft_size] += dframes[:, t]
        _accumulate(x, dx.astype(dtype, copy=False))

    return _node(data, (x,), backward)


def istft_c(spec: Tensor, fft_size: int, hop: int, window: np.ndarray) -> Tensor:
    """Weighted overlap-add inverse of `stft_c`.  spec [B, 2, F, Tf] -> [B, N]
    with N = (Tf - 1) * hop + fft_size.  Imaginary parts of the DC and Nyquist
    bins are ignored (they have no real-signal counterpart)."""
    b, two, f, n_frames = spec.data.shape
    if two != 2 or f != fft_size // 2 + 1:
        raise ValueError(f"expected [B, 2, {fft_size // 2 + 1}, T], got {spec.data.shape}")
    n = (n_frames - 1) * hop + fft_size
    dtype = spec.data.dtype

    wsum = np.zeros(n)
    wsq = window * window
    for t in range(n_frames):
        wsum[t * hop:t * hop + fft_size] += wsq
    wsum = np.maximum(wsum, 1e-12)

    h = spec.data[:, 0].transpose(0, 2, 1) + 1j * spec.data[:, 1].transpose(0, 2, 1)
    h[..., 0] = h[..., 0].real
    h[..., -1] = h[..., -1].real
    frames = np.fft.irfft(h, n=fft_size, axis=-1) * window    # [B, Tf, N_fft]
    buf = np.zeros((b, n))
    for t in range(n_frames):
        buf[:, t * hop:t * hop + fft_size] += frames[:, t]
    data = (buf / wsum).astype(dtype)

    def backward(g):
        gw = g / wsum
        gframes = _frame_view(np.ascontiguousarray(gw), fft_size, hop) * window
        gh = np.fft.rfft(gframes, axis=-1)
        scale = np.full(f, 2.0 / fft_size)
        scale[0] = scale[-1] = 1.0 / fft_size
        g_re = (gh.real * scale).transpose(0, 2, 1)
        g_im = (gh.imag * scale).transpose(0, 2, 1)
        g_im[:, 0, :] = 0.0
        g_im[:, -1, :] = 0.0
        _accumulate(spec, np.stack([g_re, g_im], axis=1).astype(dtype, copy=False))

    return _node(data, (spec,), backward)


def interleave2(a: Tensor, b: Tensor) -> Tensor:
    """Interleave two equal-shape tensors along the last axis (a first)."""
    if a.data.shape != b.data.shape:
        raise ValueError("interleave2 operands must have identical shapes")
    shape = a.data.shape[:-1] + (2 * a.data.shape[-1],)
    data = np.empty(shape, dtype=a.data.dtype)
    data[..., 0::2] = a.data
    data[..., 1::2] = b.data

    def backward(g):
        _accumulate(a, np.ascontiguousarray(g[..., 0::2]))
        _accumulate(b, np.ascontiguousarray(g[..., 1::2]))

    return _node(data, (a, b), backward)
