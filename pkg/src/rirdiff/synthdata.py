"""Synthetic stand-ins for the RIR and speech corpora.

Rooms are parameterized as a direct impulse, sparse early taps, and an
exponentially decaying noise tail whose gain is solved from the requested
direct-to-reverberant ratio. Excitations are deterministic speech-like
signals (pulse train, drifting resonances, syllabic gaps). Everything is
reproducible from integer seeds.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import butter, fftconvolve, lfilter

from . import acoustics
from .config import DataConfig, RunConfig, SignalConfig
from .sigproc import (
    RirLatent,
    SignalError,
    Waveform,
    convolve,
    direct_window,
    normalize_rir,
    rir_to_latent,
    split_rir,
)
from .wavio import read_wav, write_wav

TAIL_START_MS = 5.0  # diffuse tail onset; keeps the direct window clean


@dataclass(frozen=True)
class RoomSpec:
    """Parameters of one synthetic room."""

    t60_target: float
    drr_target: float
    early_delays_ms: tuple[float, ...] = ()
    seed: int = 0

    def __post_init__(self):
        if self.t60_target <= 0:
            raise SignalError(f"t60_target must be positive, got {self.t60_target}")
        for d in self.early_delays_ms:
            if not 0.0 <= d <= 50.0:
                raise SignalError(f"early tap delay {d} ms outside [0, 50] ms")

    @property
    def n_early_taps(self) -> int:
        return len(self.early_delays_ms)


@dataclass(frozen=True)
class CaptionedRir:
    rir: Waveform
    caption: str
    bins: acoustics.LevelBins


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


# ---------------------------------------------------------------------------
# room impulse responses
# ---------------------------------------------------------------------------

def gen_rir(spec: RoomSpec, cfg: SignalConfig) -> Waveform:
    """Render a room spec to a normalized RIR of the configured duration."""
    if np.isfinite(spec.drr_target) and abs(spec.drr_target) > acoustics.DB_CLAMP:
        raise SignalError(
            f"drr_target {spec.drr_target} dB outside the +-{acoustics.DB_CLAMP} dB clamp range"
        )
    rng = _rng(spec.seed)
    sr = cfg.sample_rate
    n = cfg.rir_samples
    h = np.zeros(n)
    h[0] = 1.0

    if not np.isfinite(spec.drr_target):
        # no reverberant energy requested: pure impulse
        return normalize_rir(Waveform(h, sr), cfg)

    rest_energy = 10.0 ** (-spec.drr_target / 10.0)

    gains = rng.uniform(0.05, 0.35, size=spec.n_early_taps) * rng.choice(
        [-1.0, 1.0], size=spec.n_early_taps
    )
    tap_energy = float(np.sum(gains**2))
    if tap_energy > 0.5 * rest_energy:
        gains *= np.sqrt(0.5 * rest_energy / tap_energy)
        tap_energy = 0.5 * rest_energy
    for delay_ms, g in zip(spec.early_delays_ms, gains):
        idx = int(round(delay_ms * 1e-3 * sr))
        if 0 < idx < n:
            h[idx] += g

    tail_start = int(round(TAIL_START_MS * 1e-3 * sr))
    tau = spec.t60_target / (3.0 * np.log(10.0))
    t = np.arange(n - tail_start) / sr
    unit_tail = rng.standard_normal(n - tail_start) * np.exp(-t / tau)
    unit_energy = float(np.sum(unit_tail**2))
    tail_energy = rest_energy - tap_energy
    if tail_energy > 0 and unit_energy > 0:
        # taps and tail overlap in time: solve |taps + g*unit|^2 = rest exactly
        cross = float(np.dot(h[tail_start:], unit_tail))
        gain = (-cross + np.sqrt(cross**2 + unit_energy * tail_energy)) / unit_energy
        h[tail_start:] += unit_tail * gain

    return normalize_rir(Waveform(h, sr), cfg)


def augment_rir(
    h: Waveform,
    drr_gain_db: float,
    time_scale: float,
    cfg: SignalConfig,
) -> Waveform:
    """Perturb direct/reverberant balance and decay duration, renormalized."""
    if not -6.0 <= drr_gain_db <= 6.0:
        raise SignalError(f"drr_gain_db {drr_gain_db} outside [-6, 6] dB")
    if not 0.7 <= time_scale <= 1.4:
        raise SignalError(f"time_scale {time_scale} outside [0.7, 1.4]")
    lo, hi = direct_window(h, cfg)
    out = h.samples.copy()
    out[lo:hi] *= 10.0 ** (drr_gain_db / 20.0)
    tail = h.samples[hi:]
    if len(tail):
        positions = np.arange(len(tail)) / time_scale
        out[hi:] = np.interp(positions, np.arange(len(tail)), tail, left=0.0, right=0.0)
    return normalize_rir(Waveform(out, h.sample_rate), cfg)


# ---------------------------------------------------------------------------
# speech-like excitation
# ---------------------------------------------------------------------------

def gen_excitation(seed: int, duration: float, sample_rate: int) -> Waveform:
    """Deterministic speech-like signal: pitch pulses, drifting resonances,
    syllabic amplitude gaps. Peak-normalized to 0.95."""
    if duration <= 0:
        raise SignalError(f"duration must be positive, got {duration}")
    rng = _rng(seed)
    sr = sample_rate
    n = int(round(duration * sr))

    # pitch contour: slow log-domain random walk in [80, 300] Hz
    ctrl_rate = 100.0
    n_ctrl = max(2, int(duration * ctrl_rate) + 1)
    steps = rng.standard_normal(n_ctrl) * 0.06
    logf0 = np.log(rng.uniform(95.0, 230.0)) + np.cumsum(steps)
    f0 = np.clip(np.exp(logf0), 80.0, 300.0)
    f0_t = np.interp(np.arange(n) / sr, np.arange(n_ctrl) / ctrl_rate, f0)

    phase = np.cumsum(f0_t / sr)
    pulses = np.zeros(n)
    pulses[1:][np.diff(np.floor(phase)) > 0] = 1.0

    # glottal-ish shaping: t * exp(-t/tg) kernel
    tg = 0.0012
    kt = np.arange(int(0.006 * sr)) / sr
    kernel = kt * np.exp(-kt / tg)
    kernel /= np.abs(kernel).sum()
    voiced = fftconvolve(pulses, kernel)[:n]

    # drifting resonances, block-processed with overlap-add
    block = int(0.2 * sr)
    hop = block // 2
    win = np.hanning(block)
    shaped = np.zeros(n + block)
    centers = rng.uniform([350.0, 900.0], [700.0, 2400.0])
    for start in range(0, n, hop):
        seg = voiced[start : start + block]
        if len(seg) < block:
            seg = np.pad(seg, (0, block - len(seg)))
        centers = np.clip(centers * np.exp(rng.standard_normal(2) * 0.08), 250.0, 3400.0)
        out_seg = seg
        for fc in centers:
            b, a = butter(2, [fc * 0.7 / (sr / 2), min(fc * 1.3 / (sr / 2), 0.98)], btype="band")
            out_seg = out_seg + 2.0 * lfilter(b, a, out_seg)
        shaped[start : start + block] += out_seg * win
    shaped = shaped[:n]

    # syllabic envelope with pauses
    syl_rate = rng.uniform(2.2, 4.5)
    env_ctrl = 0.5 + 0.5 * np.sin(
        2 * np.pi * syl_rate * np.arange(n_ctrl) / ctrl_rate + rng.uniform(0, 2 * np.pi)
    )
    env_ctrl *= rng.uniform(0.4, 1.0, size=n_ctrl)
    env_ctrl[env_ctrl < 0.18] = 0.0  # pauses let the reverb tail show
    env = np.interp(np.arange(n) / sr, np.arange(n_ctrl) / ctrl_rate, env_ctrl)

    sig = shaped * env
    sig += 0.002 * lfilter(*butter(2, min(6000.0 / (sr / 2), 0.98)), rng.standard_normal(n))
    peak = np.abs(sig).max()
    if peak > 0:
        sig = sig * (0.95 / peak)
    return Waveform(sig, sr)


# ---------------------------------------------------------------------------
# training examples
# ---------------------------------------------------------------------------

def make_example(
    h: Waveform, s: Waveform, cfg: SignalConfig
) -> tuple[Waveform, Waveform, RirLatent]:
    """(full reverberant signal, oracle early-reflected signal, RIR latent)."""
    if len(s) != cfg.segment_samples:
        raise SignalError(
            f"excitation must be {cfg.segment_samples} samples, got {len(s)}"
        )
    lo, hi = direct_window(h, cfg)
    if abs(float(np.sum(h.samples[lo:hi] ** 2)) - 1.0) > 1e-6:
        raise SignalError("RIR must be normalized to unit direct-arrival energy")
    early, _ = split_rir(h, cfg.early_ms)
    x_full = convolve(s, h)
    x_early = convolve(s, early)
    return x_full, x_early, rir_to_latent(h, cfg)


# ---------------------------------------------------------------------------
# captions
# ---------------------------------------------------------------------------

T60_KEYWORDS = {"low": "tight", "mid": "moderate", "high": "spacious"}
T60_TAIL_PHRASES = {
    "low": "short reverberation",
    "mid": "balanced reverberation",
    "high": "long echoes",
}
DRR_PHRASES = {
    "high": "a close talker",
    "mid": "a talker at moderate distance",
    "low": "a distant talker",
}
DRR_KEYWORDS = {"high": "close", "mid": "moderate distance", "low": "distant"}


def render_caption(bins: acoustics.LevelBins) -> str:
    return (
        f"a {T60_KEYWORDS[bins.t60_level]} space with "
        f"{T60_TAIL_PHRASES[bins.t60_level]} and {DRR_PHRASES[bins.drr_level]}"
    )


def caption_for(h: Waveform, cfg: SignalConfig) -> CaptionedRir:
    """Template caption whose keywords match the measured level bins."""
    bins = acoustics.level_bins(acoustics.acoustic_params(h, cfg))
    return CaptionedRir(rir=h, caption=render_caption(bins), bins=bins)


def caption_vocabulary() -> list[str]:
    words: set[str] = set()
    for t60_level in T60_KEYWORDS:
        for drr_level in DRR_PHRASES:
            words.update(
                render_caption(acoustics.LevelBins(drr_level, t60_level)).split()
            )
    return sorted(words)


# ---------------------------------------------------------------------------
# room sampling
# ---------------------------------------------------------------------------

def weighted_room_sampler(room_counts: list[int]) -> np.ndarray:
    """Per-source sampling weights proportional to unique-room counts."""
    if len(room_counts) == 0:
        raise SignalError("room_counts must be non-empty")
    counts = np.asarray(room_counts, dtype=np.float64)
    if np.any(counts <= 0):
        raise SignalError("room counts must be positive")
    return counts / counts.sum()


def sample_spec(rng: np.random.Generator, data: DataConfig, stratify_bins: bool = False) -> RoomSpec:
    """Draw one room spec: log-uniform T60, uniform DRR.

    With ``stratify_bins`` the draw balances the 3x3 caption grid instead
    (used for the text-conditioning dataset so every bin is populated).
    """
    if stratify_bins:
        t60_edges = (data.t60_min, 0.5, 1.2, min(data.t60_max, 1.38))
        drr_edges = (data.drr_min, 5.0, 11.0, data.drr_max)
        tb = rng.integers(0, 3)
        db = rng.integers(0, 3)
        t60 = float(np.exp(rng.uniform(np.log(t60_edges[tb]), np.log(t60_edges[tb + 1]))))
        drr = float(rng.uniform(drr_edges[db], drr_edges[db + 1]))
    else:
        t60 = float(np.exp(rng.uniform(np.log(data.t60_min), np.log(data.t60_max))))
        drr = float(rng.uniform(data.drr_min, data.drr_max))
    n_taps = int(rng.integers(0, data.max_early_taps + 1))
    delays = tuple(sorted(rng.uniform(3.0, 45.0, size=n_taps).tolist()))
    return RoomSpec(
        t60_target=t60,
        drr_target=drr,
        early_delays_ms=delays,
        seed=int(rng.integers(0, 2**31 - 1)),
    )


# ---------------------------------------------------------------------------
# dataset on disk
# ---------------------------------------------------------------------------

def build_dataset(
    out_dir: str | Path,
    n: int,
    cfg: RunConfig,
    seed: int | None = None,
    captions: bool = False,
) -> list[Path]:
    """Write ``n`` example directories: x_full.wav, x_early.wav, rir.wav,
    caption.txt, meta.txt. Fully determined by ``seed``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sig = cfg.signal
    rng = _rng(cfg.data.seed if seed is None else seed)
    dirs: list[Path] = []
    for i in range(n):
        spec = sample_spec(rng, cfg.data, stratify_bins=captions)
        h = gen_rir(spec, sig)
        drr_gain, time_scale = 0.0, 1.0
        if cfg.data.augment:
            drr_gain = float(rng.uniform(-4.0, 4.0))
            time_scale = float(rng.uniform(0.8, 1.25))
            h = augment_rir(h, drr_gain, time_scale, sig)
        s = gen_excitation(int(rng.integers(0, 2**31 - 1)), sig.segment_seconds, sig.sample_rate)
        x_full, x_early, _ = make_example(h, s, sig)
        volume = float(rng.uniform(0.4, 1.0))

        d = out / f"{i:06d}"
        d.mkdir(exist_ok=True)
        write_wav(d / "x_full.wav", Waveform(x_full.samples * volume, sig.sample_rate))
        write_wav(d / "x_early.wav", Waveform(x_early.samples * volume, sig.sample_rate))
        write_wav(d / "rir.wav", h)
        captioned = caption_for(h, sig)
        (d / "caption.txt").write_text(captioned.caption + "\n")
        meta = {
            "seed": spec.seed,
            "t60_target": f"{spec.t60_target:.6f}",
            "drr_target": f"{spec.drr_target:.4f}",
            "drr_gain": f"{drr_gain:.4f}",
            "time_scale": f"{time_scale:.4f}",
            "volume": f"{volume:.4f}",
        }
        (d / "meta.txt").write_text("".join(f"{k}={v}\n" for k, v in meta.items()))
        dirs.append(d)
    return dirs


def example_dirs(root: str | Path) -> list[Path]:
    dirs = sorted(p for p in Path(root).iterdir() if p.is_dir())
    if not dirs:
        raise SignalError(f"no example directories under {root}")
    return dirs


def load_example(d: Path, cfg: SignalConfig) -> dict:
    """Load one example directory; recomputes the latent target from rir.wav."""
    h = read_wav(d / "rir.wav")
    return {
        "x_full": read_wav(d / "x_full.wav"),
        "x_early": read_wav(d / "x_early.wav"),
        "rir": h,
        "latent": rir_to_latent(h, cfg),
        "caption": (d / "caption.txt").read_text().strip(),
    }
