"""Finite-difference validation of tape gradients.

`grad_check` projects the op output against a fixed random cotangent so a
single scalar exercises every output element, then compares the analytic
input gradients against central differences in float64.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, mul, tsum

__all__ = ["grad_check"]


def grad_check(fn, inputs: list[np.ndarray], eps: float = 1e-5,
               cotangent_seed: int = 0, max_entries: int | None = None,
               rng: np.random.Generator | None = None) -> float:
    """Max global-scale relative error between tape and numeric gradients.

    fn maps a list of Tensors to one Tensor.  All arithmetic runs in
    float64.  For large inputs, `max_entries` samples a deterministic subset
    of coordinates per input instead of sweeping all of them.
    """
    inputs64 = [np.asarray(a, dtype=np.float64) for a in inputs]

    tensors = [Tensor(a.copy(), requires_grad=True) for a in inputs64]
    out = fn(tensors)
    cot_rng = np.random.default_rng(cotangent_seed)
    u = cot_rng.standard_normal(out.data.shape)
    loss = tsum(mul(out, Tensor(u)))
    loss.backward()
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data)
                for t in tensors]

    def scalar(arrays: list[np.ndarray]) -> float:
        val = fn([Tensor(a) for a in arrays]).data
        return float(np.sum(val * u))

    if rng is None:
        rng = np.random.default_rng(cotangent_seed + 1)

    worst = 0.0
    for idx, base in enumerate(inputs64):
        flat_n = base.size
        if max_entries is not None and flat_n > max_entries:
            coords = rng.choice(flat_n, size=max_entries, replace=False)
        else:
            coords = np.arange(flat_n)
        a_flat = analytic[idx].ravel()
        numeric = np.zeros(len(coords))
        for j, c in enumerate(coords):
            work = [b.copy() for b in inputs64]
            work[idx].ravel()[c] = base.ravel()[c] + eps
            up = scalar(work)
            work[idx].ravel()[c] = base.ravel()[c] - eps
            down = scalar(work)
            numeric[j] = (up - down) / (2.0 * eps)
        a_sel = a_flat[coords]
        scale = max(np.max(np.abs(a_sel), initial=0.0),
                    np.max(np.abs(numeric), initial=0.0), 1e-12)
        err = float(np.max(np.abs(a_sel - numeric), initial=0.0) / scale)
        worst = max(worst, err)
    return worst
