"""AdamW with decoupled weight decay, plus learning-rate schedules."""

from __future__ import annotations

import numpy as np

from .layers import Parameter


class OptimError(RuntimeError):
    pass


class AdamW:
    def __init__(self, named_params: list[tuple[str, Parameter]], lr: float = 1e-4,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.01):
        self.named_params = named_params
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in named_params}
        self.v = {n: np.zeros_like(p.data) for n, p in named_params}

    def step(self) -> None:
        b1, b2 = self.betas
        self.t += 1
        for name, p in self.named_params:
            g = p.grad
            if g is None:
                continue
            if not np.isfinite(g).all():
                raise OptimError(f"non-finite gradient for parameter {name!r} at step {self.t}")
            m = self.m[name]
            v = self.v[name]
            m += (1 - b1) * (g - m)
            v += (1 - b2) * (g * g - v)
            mhat = m / (1 - b1**self.t)
            vhat = v / (1 - b2**self.t)
            p.data -= self.lr * (mhat / (np.sqrt(vhat) + self.eps) + self.weight_decay * p.data)

    def zero_grad(self) -> None:
        for _, p in self.named_params:
            p.grad = None


def exponential_decay(lr0: float, gamma: float):
    """lr(step) = lr0 * gamma**step."""

    def schedule(step: int) -> float:
        return lr0 * gamma**step

    return schedule


def warmup_cosine(lr0: float, lr_end: float, total_steps: int, warmup_steps: int = 0):
    """Linear warmup to lr0, then cosine decay to exactly lr_end at total_steps."""

    def schedule(step: int) -> float:
        if warmup_steps > 0 and step < warmup_steps:
            return lr0 * (step + 1) / warmup_steps
        span = max(1, total_steps - warmup_steps)
        frac = min(1.0, (step - warmup_steps) / span)
        return lr_end + (lr0 - lr_end) * 0.5 * (1.0 + np.cos(np.pi * frac))

    return schedule
