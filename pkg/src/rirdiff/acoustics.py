"""Acoustic parameter estimation and evaluation statistics.

T60 and EDT are read off the Schroeder energy decay curve. Backward
integration of a time-limited RIR understates late decay (the curve plunges
at the end), so the decay estimators optionally add an iteratively fitted
tail-energy term before fitting; the raw curve itself is left untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SignalConfig
from .sigproc import Waveform, direct_window

EDC_FLOOR_DB = -300.0
DB_CLAMP = 40.0


class MetricError(ValueError):
    """Raised when a signal cannot support the requested measurement."""


@dataclass(frozen=True)
class AcousticParams:
    t60: float
    edt: float
    drr: float
    c50: float


@dataclass(frozen=True)
class LevelBins:
    drr_level: str  # low / mid / high
    t60_level: str

    @property
    def reverb_level(self) -> tuple[str, str]:
        return (self.drr_level, self.t60_level)


@dataclass(frozen=True)
class ErrorStats:
    pae: float | None  # percent; None when refs may cross zero (dB metrics)
    mse: float
    mae: float


# ---------------------------------------------------------------------------
# energy decay
# ---------------------------------------------------------------------------

def energy_decay_curve(h: Waveform) -> np.ndarray:
    """Schroeder curve: EDC(t) = 10 log10(sum_{tau>=t} h^2 / sum h^2), in dB."""
    e = h.samples.astype(np.float64) ** 2
    total = e.sum()
    if total <= 0:
        raise MetricError("all-zero signal has no energy decay")
    tail = np.cumsum(e[::-1])[::-1]
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(tail / total)
    return np.maximum(db, EDC_FLOOR_DB)


def _tail_compensation(energy: np.ndarray, sample_rate: int, n_iter: int = 4) -> float:
    """Estimate the energy carried beyond the end of the recording.

    Fits a line to the decay, integrates its extrapolation past the last
    sample, and iterates with the compensated curve. Returns 0.0 when no
    usable fit exists.
    """
    total = energy.sum()
    tail = np.cumsum(energy[::-1])[::-1]
    t = np.arange(len(energy)) / sample_rate
    comp = 0.0
    for _ in range(n_iter):
        with np.errstate(divide="ignore"):
            db = 10.0 * np.log10((tail + comp) / (total + comp))
        floor = db.min()
        lo = max(-35.0, floor + 3.0)
        mask = (db <= -5.0) & (db >= lo)
        if mask.sum() < 8:
            return comp
        slope, intercept = np.polyfit(t[mask], db[mask], 1)
        if slope >= -1e-9:
            return comp
        end_db = intercept + slope * t[-1]
        # line level L(t): tail ~ (total+comp) 10^{L/10}; its own integral past
        # the end equals that value (pure exponential), which is the new tail
        new_comp = (total + comp) * 10.0 ** (end_db / 10.0)
        if not np.isfinite(new_comp) or new_comp > 10.0 * total:
            return comp
        if abs(new_comp - comp) <= 1e-9 * (total + comp):
            return new_comp
        comp = new_comp
    return comp


def _compensated_edc(h: Waveform, compensate: bool) -> np.ndarray:
    e = h.samples.astype(np.float64) ** 2
    total = e.sum()
    if total <= 0:
        raise MetricError("all-zero signal has no energy decay")
    comp = _tail_compensation(e, h.sample_rate) if compensate else 0.0
    tail = np.cumsum(e[::-1])[::-1]
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10((tail + comp) / (total + comp))
    return np.maximum(db, EDC_FLOOR_DB)


def t60(h: Waveform, compensate: bool = True) -> float:
    """Reverberation time: -60 dB extrapolated from a [-5, -35] dB line fit."""
    db = _compensated_edc(h, compensate)
    floor = db.min()
    lo = max(-35.0, floor + 3.0)
    if lo > -13.0:
        raise MetricError(
            f"insufficient decay range: curve reaches only {floor:.1f} dB"
        )
    t = np.arange(len(db)) / h.sample_rate
    mask = (db <= -5.0) & (db >= lo)
    if mask.sum() < 8:
        raise MetricError(
            f"insufficient decay range: {int(mask.sum())} samples between -5 and {lo:.1f} dB"
        )
    slope = np.polyfit(t[mask], db[mask], 1)[0]
    if slope >= 0:
        raise MetricError("energy decay curve does not decay over the fit range")
    return float(-60.0 / slope)


def edt(h: Waveform, compensate: bool = True, full_scale: bool = True) -> float:
    """Early decay time from the 0 to -10 dB segment.

    With ``full_scale`` (default) the crossing time is scaled by 6 to the
    60 dB-equivalent convention; otherwise the raw crossing time is returned.
    """
    db = _compensated_edc(h, compensate)
    if db.min() > -10.0:
        raise MetricError(f"decay reaches only {db.min():.1f} dB; need -10 dB for EDT")
    idx = int(np.argmax(db <= -10.0))
    if idx == 0:
        raise MetricError("energy decay curve starts below -10 dB")
    # linear interpolation between the bracketing samples
    d0, d1 = db[idx - 1], db[idx]
    frac = (d0 + 10.0) / (d0 - d1)
    t_cross = (idx - 1 + frac) / h.sample_rate
    return float(6.0 * t_cross) if full_scale else float(t_cross)


def _ratio_db(num: float, den: float) -> float:
    if num <= 0 and den <= 0:
        raise MetricError("no energy on either side of the split")
    if den <= 0:
        return DB_CLAMP
    if num <= 0:
        return -DB_CLAMP
    return float(np.clip(10.0 * np.log10(num / den), -DB_CLAMP, DB_CLAMP))


def drr(h: Waveform, cfg: SignalConfig) -> float:
    """Direct-to-reverberant ratio in dB, clamped to +-40."""
    lo, hi = direct_window(h, cfg)
    e = h.samples**2
    direct = float(e[lo:hi].sum())
    rest = float(e[:lo].sum() + e[hi:].sum())
    return _ratio_db(direct, rest)


def c50(h: Waveform) -> float:
    """Clarity index: energy before vs after 50 ms, in dB, clamped to +-40."""
    b = int(round(0.050 * h.sample_rate))
    e = h.samples**2
    return _ratio_db(float(e[:b].sum()), float(e[b:].sum()))


def acoustic_params(h: Waveform, cfg: SignalConfig) -> AcousticParams:
    return AcousticParams(t60=t60(h), edt=edt(h), drr=drr(h, cfg), c50=c50(h))


# ---------------------------------------------------------------------------
# error statistics and level bins
# ---------------------------------------------------------------------------

def error_stats(est: list[float], ref: list[float], include_pae: bool = True) -> ErrorStats:
    """PAE / MSE / MAE between paired metric lists."""
    e = np.asarray(est, dtype=np.float64)
    r = np.asarray(ref, dtype=np.float64)
    if e.shape != r.shape:
        raise MetricError(f"length mismatch: {e.shape} vs {r.shape}")
    if e.size == 0:
        raise MetricError("empty metric lists")
    diff = e - r
    pae = None
    if include_pae:
        if np.any(r == 0):
            raise MetricError("PAE undefined: reference contains zero")
        pae = float(np.mean(np.abs(diff) / np.abs(r)) * 100.0)
    return ErrorStats(pae=pae, mse=float(np.mean(diff**2)), mae=float(np.mean(np.abs(diff))))


DRR_THRESHOLDS = (5.0, 11.0)   # dB
T60_THRESHOLDS = (0.5, 1.2)    # seconds


def _bin3(value: float, thresholds: tuple[float, float]) -> str:
    # boundary values go to the lower bin
    if value <= thresholds[0]:
        return "low"
    if value <= thresholds[1]:
        return "mid"
    return "high"


def level_bins(p: AcousticParams) -> LevelBins:
    """3-level DRR/T60 bins; the pair indexes the 3x3 reverb-level grid."""
    return LevelBins(
        drr_level=_bin3(p.drr, DRR_THRESHOLDS),
        t60_level=_bin3(p.t60, T60_THRESHOLDS),
    )


METRICS_HEADER = "id\tt60\tedt\tdrr\tc50\tdrr_level\tt60_level"


def params_row(example_id: str, p: AcousticParams) -> str:
    """One delimited export row: id, metrics, level bins."""
    bins = level_bins(p)
    return (
        f"{example_id}\t{p.t60:.6f}\t{p.edt:.6f}\t{p.drr:.4f}\t{p.c50:.4f}"
        f"\t{bins.drr_level}\t{bins.t60_level}"
    )
