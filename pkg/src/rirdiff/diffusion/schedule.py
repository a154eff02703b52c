"""Noise-level schedule: power-law interpolation between sigma bounds.

The sigma bounds come from a log-SNR range via lambda = -2 ln(sigma), i.e.
sigma = exp(-lambda / 2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..config import SamplerConfig


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSchedule:
    sigmas: np.ndarray  # strictly decreasing, sigmas[0] = sigma_max
    sigma_min: float
    sigma_max: float
    rho: float

    def __post_init__(self):
        s = self.sigmas
        if len(s) < 2 or np.any(np.diff(s) >= 0) or np.any(s <= 0):
            raise ScheduleError("sigmas must be a strictly decreasing positive sequence")

    def __len__(self) -> int:
        return len(self.sigmas)


def sigma_from_logsnr(logsnr: float) -> float:
    return float(np.exp(-0.5 * logsnr))


def karras_sigmas(n_steps: int, sigma_min: float, sigma_max: float, rho: float = 7.0) -> NoiseSchedule:
    """sigma_i = (smax^(1/rho) + i/(n-1) * (smin^(1/rho) - smax^(1/rho)))^rho."""
    if n_steps < 2:
        raise ScheduleError(f"need at least 2 steps, got {n_steps}")
    if not 0 < sigma_min < sigma_max:
        raise ScheduleError(f"need 0 < sigma_min < sigma_max, got {sigma_min}, {sigma_max}")
    ramp = np.linspace(0.0, 1.0, n_steps)
    inv_rho = 1.0 / rho
    sigmas = (sigma_max**inv_rho + ramp * (sigma_min**inv_rho - sigma_max**inv_rho)) ** rho
    return NoiseSchedule(sigmas=sigmas, sigma_min=sigma_min, sigma_max=sigma_max, rho=rho)


def schedule_from_config(cfg: SamplerConfig, n_steps: int | None = None) -> NoiseSchedule:
    """Schedule whose bounds map the configured log-SNR range to sigmas."""
    return karras_sigmas(
        cfg.steps if n_steps is None else n_steps,
        sigma_min=sigma_from_logsnr(cfg.logsnr_max),
        sigma_max=sigma_from_logsnr(cfg.logsnr_min),
        rho=cfg.rho,
    )
