"""Complex-valued layers composed from real ops.

A complex tensor is a (re, im) pair of real Tensors.  Every complex linear
map W = Wr + jWi applied to x = xr + jxi expands to four real applications:

    out = (Wr.xr - Wi.xi) + j(Wr.xi + Wi.xr)
"""

from __future__ import annotations

from dataclasses import dataclass

from . import functional as F
from .tensor import Tensor, add, concat, linear, mul, sub, tsqrt

__all__ = ["CTensor", "cadd", "cmul", "cconcat", "cabs2", "cabs",
           "cconv2d", "cconv_transpose2d", "clinear", "clstm"]


@dataclass
class CTensor:
    re: Tensor
    im: Tensor

    @property
    def shape(self):
        return self.re.data.shape


def cadd(a: CTensor, b: CTensor) -> CTensor:
    return CTensor(add(a.re, b.re), add(a.im, b.im))


def cmul(a: CTensor, b: CTensor) -> CTensor:
    """Elementwise complex product."""
    return CTensor(sub(mul(a.re, b.re), mul(a.im, b.im)),
                   add(mul(a.re, b.im), mul(a.im, b.re)))


def cconcat(tensors: list[CTensor], axis: int = 1) -> CTensor:
    """Channel-style concatenation: real parts together, imaginary parts
    together, preserving the (re, im) pairing per channel."""
    return CTensor(concat([t.re for t in tensors], axis),
                   concat([t.im for t in tensors], axis))


def cabs2(a: CTensor) -> Tensor:
    return add(mul(a.re, a.re), mul(a.im, a.im))


def cabs(a: CTensor, eps: float = 0.0) -> Tensor:
    mag2 = cabs2(a)
    if eps:
        mag2 = add(mag2, eps)
    return tsqrt(mag2)


def cconv2d(x: CTensor, wr: Tensor, wi: Tensor,
            br: Tensor | None = None, bi: Tensor | None = None,
            stride=(1, 1), pad=(0, 0, 0, 0)) -> CTensor:
    rr = F.conv2d(x.re, wr, br, stride, pad)
    ii = F.conv2d(x.im, wi, None, stride, pad)
    ri = F.conv2d(x.re, wi, bi, stride, pad)
    ir = F.conv2d(x.im, wr, None, stride, pad)
    return CTensor(sub(rr, ii), add(ri, ir))


def cconv_transpose2d(x: CTensor, wr: Tensor, wi: Tensor,
                      br: Tensor | None = None, bi: Tensor | None = None,
                      stride=(1, 1), output_padding=(0, 0)) -> CTensor:
    rr = F.conv_transpose2d(x.re, wr, br, stride, output_padding)
    ii = F.conv_transpose2d(x.im, wi, None, stride, output_padding)
    ri = F.conv_transpose2d(x.re, wi, bi, stride, output_padding)
    ir = F.conv_transpose2d(x.im, wr, None, stride, output_padding)
    return CTensor(sub(rr, ii), add(ri, ir))


def clinear(x: CTensor, wr: Tensor, wi: Tensor,
            br: Tensor | None = None, bi: Tensor | None = None) -> CTensor:
    rr = linear(x.re, wr, br)
    ii = linear(x.im, wi, None)
    ri = linear(x.re, wi, bi)
    ir = linear(x.im, wr, None)
    return CTensor(sub(rr, ii), add(ri, ir))


def clstm(x: CTensor, wx_r: Tensor, wh_r: Tensor, b_r: Tensor,
          wx_i: Tensor, wh_i: Tensor, b_i: Tensor) -> CTensor:
    """Complex LSTM: two real LSTMs L_r and L_i combined as a complex map
    over the sequence, out = (L_r(xr) - L_i(xi)) + j(L_r(xi) + L_i(xr))."""
    rr = F.lstm(x.re, wx_r, wh_r, b_r)
    ii = F.lstm(x.im, wx_i, wh_i, b_i)
    ri = F.lstm(x.im, wx_r, wh_r, b_r)
    ir = F.lstm(x.re, wx_i, wh_i, b_i)
    return CTensor(sub(rr, ii), add(ri, ir))
