"""Velocity parameterization over the sigma noise scale.

With alpha = 1/sqrt(1+sigma^2) and sigma_hat = sigma/sqrt(1+sigma^2) the
forward process x_t = alpha*x0 + sigma_hat*eps is variance preserving
(alpha^2 + sigma_hat^2 = 1), the regression target is
v = alpha*eps - sigma_hat*x0, and x0 = alpha*x_t - sigma_hat*v exactly.
"""

from __future__ import annotations

import numpy as np


def alpha_sigma_hat(sigma):
    """(alpha, sigma_hat) for scalar or array sigma."""
    s = np.asarray(sigma, dtype=np.float64)
    denom = np.sqrt(1.0 + s * s)
    return 1.0 / denom, s / denom


def _check(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def xt_from_x0(x0: np.ndarray, eps: np.ndarray, sigma) -> np.ndarray:
    _check(x0, eps, "xt_from_x0")
    alpha, shat = _broadcast(sigma, x0)
    return alpha * x0 + shat * eps


def v_target(x0: np.ndarray, eps: np.ndarray, sigma) -> np.ndarray:
    _check(x0, eps, "v_target")
    alpha, shat = _broadcast(sigma, x0)
    return alpha * eps - shat * x0


def x0_from_v(x_t: np.ndarray, v: np.ndarray, sigma) -> np.ndarray:
    _check(x_t, v, "x0_from_v")
    alpha, shat = _broadcast(sigma, x_t)
    return alpha * x_t - shat * v


def _broadcast(sigma, like: np.ndarray):
    alpha, shat = alpha_sigma_hat(sigma)
    alpha = np.asarray(alpha, dtype=like.dtype)
    shat = np.asarray(shat, dtype=like.dtype)
    if alpha.ndim:  # per-example sigmas: append axes up to the data rank
        extra = like.ndim - alpha.ndim
        alpha = alpha.reshape(alpha.shape + (1,) * extra)
        shat = shat.reshape(shat.shape + (1,) * extra)
    return alpha, shat
