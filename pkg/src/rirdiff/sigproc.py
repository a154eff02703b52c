"""Deterministic signal transforms: companding, STFT, compression, convolution,
impulse-response normalization and splitting, and the RIR <-> latent chain.

All transforms are pure functions computed in float64; callers that feed the
network cast to float32 at the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .config import SignalConfig


class SignalError(ValueError):
    """Raised when an input violates a transform's contract."""


@dataclass(frozen=True)
class Waveform:
    """Mono audio: ``samples`` nominally in [-1, 1] at ``sample_rate`` Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise SignalError(f"waveform must be 1-D, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise SignalError("waveform contains NaN or Inf")
        if self.sample_rate <= 0:
            raise SignalError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class ComplexSpectrogram:
    """Complex STFT matrix, ``bins`` of shape (freq_bins, frames)."""

    bins: np.ndarray
    frame: int
    hop: int

    def __post_init__(self):
        if self.bins.ndim != 2 or self.bins.shape[0] != self.frame // 2 + 1:
            raise SignalError(
                f"expected {self.frame // 2 + 1} frequency rows for frame {self.frame}, "
                f"got shape {self.bins.shape}"
            )

    @property
    def n_frames(self) -> int:
        return self.bins.shape[1]


@dataclass(frozen=True)
class RirLatent:
    """Real/imaginary stack of a compressed RIR spectrogram, shape (2F, T)."""

    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] % 2 != 0:
            raise SignalError(f"latent must be (2F, T), got shape {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise SignalError("latent contains NaN or Inf")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


# ---------------------------------------------------------------------------
# mu-law companding
# ---------------------------------------------------------------------------

def mu_law_encode(w: Waveform, mu: float = 255.0) -> Waveform:
    """Compand amplitudes: y = sign(x) * ln(1 + mu|x|) / ln(1 + mu).

    Inputs are clamped to [-1, 1] before encoding; output stays in [-1, 1].
    """
    if mu <= 0:
        raise SignalError(f"mu must be positive, got {mu}")
    x = np.clip(w.samples, -1.0, 1.0)
    y = np.sign(x) * np.log1p(mu * np.abs(x)) / np.log1p(mu)
    return Waveform(y, w.sample_rate)


def mu_law_decode(w: Waveform, mu: float = 255.0) -> Waveform:
    """Exact inverse of :func:`mu_law_encode` on [-1, 1]."""
    if mu <= 0:
        raise SignalError(f"mu must be positive, got {mu}")
    y = w.samples
    x = np.sign(y) * (np.power(1.0 + mu, np.abs(y)) - 1.0) / mu
    return Waveform(x, w.sample_rate)


# ---------------------------------------------------------------------------
# STFT / ISTFT
# ---------------------------------------------------------------------------

def periodic_hann(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def _ola_weight(window: np.ndarray, hop: int, n_frames: int) -> np.ndarray:
    """Sum of squared synthesis windows at every output sample."""
    frame = len(window)
    total = (n_frames - 1) * hop + frame
    weight = np.zeros(total)
    w2 = window * window
    for i in range(n_frames):
        weight[i * hop : i * hop + frame] += w2
    return weight


def check_ola(window: np.ndarray, hop: int) -> None:
    """Reject window/hop pairs whose overlap-add coverage has (near-)zeros."""
    frame = len(window)
    if hop > frame:
        raise SignalError(f"hop {hop} exceeds frame {frame}: gaps in coverage")
    # interior coverage is periodic with period hop once frames fully overlap
    weight = _ola_weight(window, hop, 2 * (frame // hop) + 2)
    interior = weight[frame : frame + hop]
    if interior.min() < 1e-8:
        raise SignalError("window/hop pair fails the overlap-add reconstruction condition")


def stft(w: Waveform, frame: int, hop: int, window: np.ndarray | None = None) -> ComplexSpectrogram:
    """Centered STFT with reflection padding; frame count = len/hop + 1."""
    if frame % hop != 0:
        raise SignalError(f"hop {hop} must divide frame {frame}")
    win = periodic_hann(frame) if window is None else np.asarray(window, dtype=np.float64)
    if len(win) != frame:
        raise SignalError(f"window length {len(win)} != frame {frame}")
    check_ola(win, hop)
    x = w.samples
    if len(x) % hop != 0:
        raise SignalError(f"signal length {len(x)} must be a multiple of hop {hop}")
    half = frame // 2
    padded = np.pad(x, (half, half), mode="reflect")
    n_frames = len(x) // hop + 1
    idx = np.arange(frame)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = padded[idx] * win[None, :]
    bins = np.fft.rfft(frames, axis=1).T
    return ComplexSpectrogram(bins, frame, hop)


def istft(s: ComplexSpectrogram, length: int, window: np.ndarray | None = None) -> np.ndarray:
    """Weighted overlap-add inverse of :func:`stft`; returns ``length`` samples."""
    frame, hop = s.frame, s.hop
    win = periodic_hann(frame) if window is None else np.asarray(window, dtype=np.float64)
    check_ola(win, hop)
    frames = np.fft.irfft(s.bins.T, n=frame, axis=1) * win[None, :]
    n_frames = frames.shape[0]
    total = (n_frames - 1) * hop + frame
    out = np.zeros(total)
    for i in range(n_frames):
        out[i * hop : i * hop + frame] += frames[i]
    weight = _ola_weight(win, hop, n_frames)
    # window zeros at the outermost pad samples are discarded by the crop
    np.divide(out, weight, out=out, where=weight > 1e-12)
    half = frame // 2
    if half + length > total:
        raise SignalError(f"requested length {length} exceeds spectrogram coverage")
    return out[half : half + length]


# ---------------------------------------------------------------------------
# power compression
# ---------------------------------------------------------------------------

def power_compress(s: ComplexSpectrogram, alpha: float = 0.3, beta: float = 2.0) -> ComplexSpectrogram:
    """Map magnitudes to beta * |c|^alpha, preserving phase. Zero maps to zero."""
    if alpha <= 0 or beta <= 0:
        raise SignalError(f"alpha and beta must be positive, got {alpha}, {beta}")
    mag = np.abs(s.bins)
    scale = np.where(mag > 0, beta * np.power(mag, alpha, where=mag > 0) / np.where(mag > 0, mag, 1.0), 0.0)
    return ComplexSpectrogram(s.bins * scale, s.frame, s.hop)


def power_expand(
    s: ComplexSpectrogram,
    alpha: float = 0.3,
    beta: float = 2.0,
    max_magnitude: float = 1e3,
) -> ComplexSpectrogram:
    """Inverse of :func:`power_compress`.

    Expanded magnitudes are clamped to ``max_magnitude`` so out-of-range
    generated coefficients cannot blow up the reconstruction.
    """
    if alpha <= 0 or beta <= 0:
        raise SignalError(f"alpha and beta must be positive, got {alpha}, {beta}")
    mag = np.abs(s.bins)
    expanded = np.minimum(np.power(mag / beta, 1.0 / alpha), max_magnitude)
    scale = np.where(mag > 0, expanded / np.where(mag > 0, mag, 1.0), 0.0)
    return ComplexSpectrogram(s.bins * scale, s.frame, s.hop)


# ---------------------------------------------------------------------------
# RIR <-> latent chain
# ---------------------------------------------------------------------------

def rir_to_latent(h: Waveform, cfg: SignalConfig) -> RirLatent:
    """mu-law -> STFT -> power compression -> real/imag stack."""
    if len(h) != cfg.rir_samples:
        raise SignalError(
            f"RIR must be exactly {cfg.rir_samples} samples at {cfg.sample_rate} Hz, got {len(h)}"
        )
    companded = mu_law_encode(h, cfg.mu)
    spec = power_compress(stft(companded, cfg.frame, cfg.hop), cfg.comp_alpha, cfg.comp_beta)
    return RirLatent(np.concatenate([spec.bins.real, spec.bins.imag], axis=0))


def latent_to_rir(latent: RirLatent, cfg: SignalConfig) -> Waveform:
    """Inverse chain of :func:`rir_to_latent`."""
    rows, frames = latent.shape
    if rows != cfg.latent_rows or frames != cfg.latent_frames:
        raise SignalError(
            f"latent shape {latent.shape} does not match configured "
            f"({cfg.latent_rows}, {cfg.latent_frames})"
        )
    f = rows // 2
    bins = latent.values[:f] + 1j * latent.values[f:]
    spec = power_expand(
        ComplexSpectrogram(bins, cfg.frame, cfg.hop), cfg.comp_alpha, cfg.comp_beta
    )
    x = istft(spec, cfg.rir_samples)
    return mu_law_decode(Waveform(x, cfg.sample_rate), cfg.mu)


# ---------------------------------------------------------------------------
# convolution, normalization, splitting
# ---------------------------------------------------------------------------

def convolve(s: Waveform, h: Waveform) -> Waveform:
    """FFT-based linear convolution, truncated to the length of ``s``."""
    if len(s) == 0 or len(h) == 0:
        raise SignalError("convolve requires non-empty inputs")
    if s.sample_rate != h.sample_rate:
        raise SignalError(f"sample rates differ: {s.sample_rate} vs {h.sample_rate}")
    y = fftconvolve(s.samples, h.samples, mode="full")[: len(s)]
    return Waveform(y, s.sample_rate)


def find_onset(h: np.ndarray, threshold_db: float = 20.0) -> int:
    """First sample within ``threshold_db`` of the global peak magnitude."""
    mag = np.abs(h)
    peak = mag.max()
    if peak == 0:
        raise SignalError("cannot locate onset of an all-zero signal")
    return int(np.argmax(mag >= peak * 10.0 ** (-threshold_db / 20.0)))


def direct_window(h: Waveform, cfg: SignalConfig) -> tuple[int, int]:
    """[onset, onset + direct_ms) sample bounds of the direct arrival."""
    onset = find_onset(h.samples, cfg.onset_threshold_db)
    width = int(round(cfg.direct_ms * 1e-3 * h.sample_rate))
    return onset, min(onset + width, len(h))


def normalize_rir(h: Waveform, cfg: SignalConfig) -> Waveform:
    """Scale so the direct-arrival window carries unit energy."""
    lo, hi = direct_window(h, cfg)
    energy = float(np.sum(h.samples[lo:hi] ** 2))
    if energy <= 0:
        raise SignalError("silent direct window: degenerate RIR")
    return Waveform(h.samples / np.sqrt(energy), h.sample_rate)


def split_rir(h: Waveform, boundary_ms: float) -> tuple[Waveform, Waveform]:
    """Split into (early, late) at ``boundary_ms``; early + late == h exactly."""
    b = int(round(boundary_ms * 1e-3 * h.sample_rate))
    b = max(0, min(b, len(h)))
    early = h.samples.copy()
    early[b:] = 0.0
    late = h.samples.copy()
    late[:b] = 0.0
    return Waveform(early, h.sample_rate), Waveform(late, h.sample_rate)
