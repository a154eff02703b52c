"""Finite-difference verification of reverse-mode gradients.

The computation runs in float64 (parameters are cast up) so the comparison
isolates analytic-formula errors from float32 rounding.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    step: float = 1e-4,
    max_entries: int | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` must return a scalar Tensor computed from ``params``. Pass float64
    parameter tensors for meaningful thresholds. ``max_entries`` probes a
    deterministic subset of each parameter when set.
    """
    for p in params:
        p.grad = None
    out = f()
    if out.data.size != 1:
        raise ValueError(f"grad_check needs a scalar objective, got shape {out.shape}")
    out.backward()
    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad
        flat = p.data.reshape(-1)
        n = flat.size
        idx = (
            range(n)
            if max_entries is None or n <= max_entries
            else np.linspace(0, n - 1, max_entries).astype(int)
        )
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            hi = float(f().data)
            flat[i] = orig - step
            lo = float(f().data)
            flat[i] = orig
            numeric = (hi - lo) / (2 * step)
            a = float(analytic.reshape(-1)[i])
            err = abs(a - numeric) / (abs(a) + abs(numeric) + 1e-8)
            worst = max(worst, err)
    return worst
