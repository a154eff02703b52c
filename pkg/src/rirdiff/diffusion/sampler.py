"""Multistep stochastic sampler over the sigma schedule.

The solver state x lives in "exploding" coordinates (x = x0 + sigma * eps);
the velocity model sees the variance-preserving rescaling x / sqrt(1+sigma^2).
Per transition from sigma_t to sigma_s (t = -ln sigma_t, s = -ln sigma_s,
h = s - t, eta = 1):

    x <- (sigma_s / sigma_t) * exp(-eta*h) * x + (1 - exp(-(1+eta)h)) * D(x, sigma_t)
         + 0.5 * (1 - exp(-(1+eta)h)) * (h_prev / h)^-1 * (D - D_prev)   [midpoint]
         + sigma_s * sqrt(1 - exp(-2*eta*h)) * fresh_noise

where D is the denoised (x0) estimate from the guided velocity prediction.
The final transition to sigma = 0 returns D directly. A prompt prefix, when
given, is re-imposed after every transition at that transition's noise level.
"""

from __future__ import annotations

import math

import numpy as np

from .. import nn
from ..config import SignalConfig
from .model import DiT
from .schedule import NoiseSchedule
from .vparam import alpha_sigma_hat


class NumericalError(RuntimeError):
    pass


def cfg_combine(v_uncond: np.ndarray, v_cond: np.ndarray, scale: float) -> np.ndarray:
    """Classifier-free guidance: u + scale * (c - u)."""
    if v_uncond.shape != v_cond.shape:
        raise ValueError(f"shape mismatch: {v_uncond.shape} vs {v_cond.shape}")
    return v_uncond + scale * (v_cond - v_uncond)


def make_denoiser(model: DiT, cond: np.ndarray | None, guidance: float):
    """x0-estimator over exploding-coordinate state, with guidance baked in."""

    def denoise(x: np.ndarray, sigma: float) -> np.ndarray:
        alpha, shat = alpha_sigma_hat(sigma)
        x_vp = (x * alpha).astype(np.float32)
        sig = np.full(x.shape[0], sigma)
        with nn.no_grad():
            if cond is None:
                v = model(x_vp, sig, cond=None).data
            else:
                v_c = model(x_vp, sig, cond=cond).data
                if guidance == 1.0:
                    v = v_c
                else:
                    v_u = model(x_vp, sig, cond=None).data
                    v = cfg_combine(v_u, v_c, guidance)
        return alpha * x_vp.astype(np.float64) - shat * v.astype(np.float64)

    return denoise


def sampling_prefix_frames(prompt_ms: float, cfg: SignalConfig) -> int:
    """Number of leading latent frames that fully determine the waveform on
    [0, prompt_ms): every frame whose analysis window overlaps that span."""
    if prompt_ms <= 0:
        return 0
    p = int(round(prompt_ms * 1e-3 * cfg.sample_rate))
    return min((p + cfg.frame // 2 - 1) // cfg.hop + 1, cfg.latent_frames)


def sample(
    denoise,
    shape: tuple[int, ...],
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    prefix: tuple[np.ndarray, int] | None = None,
    eta: float = 1.0,
) -> np.ndarray:
    """Run the solver; returns the final x0-space array of ``shape``."""
    sigmas = np.append(schedule.sigmas, 0.0)
    x = rng.standard_normal(shape) * sigmas[0]
    prefix_latent, n_prefix = (None, 0)
    if prefix is not None:
        prefix_latent, n_prefix = prefix
        x[..., :n_prefix] = (
            prefix_latent[..., :n_prefix]
            + rng.standard_normal(x[..., :n_prefix].shape) * sigmas[0]
        )

    old_denoised = None
    h_prev = None
    for i in range(len(sigmas) - 1):
        s_cur, s_next = float(sigmas[i]), float(sigmas[i + 1])
        denoised = denoise(x, s_cur)
        if not np.isfinite(denoised).all():
            raise NumericalError(f"non-finite denoised estimate at step {i}")
        if s_next == 0.0:
            x = denoised
        else:
            t, s = -math.log(s_cur), -math.log(s_next)
            h = s - t
            decay = math.exp(-(1.0 + eta) * h)
            x = (s_next / s_cur) * math.exp(-eta * h) * x + (1.0 - decay) * denoised
            if old_denoised is not None:
                r = h_prev / h
                x = x + 0.5 * (1.0 - decay) * (1.0 / r) * (denoised - old_denoised)
            if eta > 0:
                churn = s_next * math.sqrt(max(0.0, 1.0 - math.exp(-2.0 * eta * h)))
                x = x + rng.standard_normal(shape) * churn
        if n_prefix:
            noise = rng.standard_normal(x[..., :n_prefix].shape) if s_next > 0 else 0.0
            x[..., :n_prefix] = prefix_latent[..., :n_prefix] + noise * s_next
        if not np.isfinite(x).all():
            raise NumericalError(f"non-finite sampler state at step {i}")
        old_denoised, h_prev = denoised, h
    return x
