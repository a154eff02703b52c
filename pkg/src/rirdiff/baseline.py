"""Non-generative baseline: embedding-to-RIR decoder and its spectral loss.

The decoder upsamples the audio embedding to an early-reflection waveform
with transposed convolutions and drives fixed octave-band noise with learned
monotone-decaying envelopes for the late tail.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from . import nn
from .config import EncoderConfig, FinsConfig, RunConfig, SignalConfig
from .encoder import AudioEncoder
from .nn import AdamW, Module, ShapeError, Tensor, exponential_decay

VARIANTS = ("original", "layernorm", "layernorm_2ch")


def variant_encoder_config(base: EncoderConfig, variant: str) -> EncoderConfig:
    if variant == "original":
        return dataclasses.replace(base, norm="batch_norm", in_channels=1)
    if variant == "layernorm":
        return dataclasses.replace(base, norm="layer_norm", in_channels=1)
    if variant == "layernorm_2ch":
        return dataclasses.replace(base, norm="layer_norm", in_channels=2)
    raise ShapeError(f"unknown baseline variant {variant!r}; expected one of {VARIANTS}")


def _octave_noise(bands: int, length: int, sample_rate: int, seed: int) -> np.ndarray:
    """Octave-spaced bandpassed noise rows, unit RMS each, fixed by seed."""
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    white = rng.standard_normal(length)
    spec = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(length, 1.0 / sample_rate)
    nyq = sample_rate / 2.0
    edges = [0.0] + [nyq / 2.0 ** (bands - 1 - k) for k in range(bands)]
    rows = []
    for k in range(bands):
        mask = (freqs >= edges[k]) & (freqs < edges[k + 1] if k + 1 < len(edges) else freqs <= nyq)
        band = np.fft.irfft(spec * mask, n=length)
        rms = np.sqrt(np.mean(band**2))
        rows.append(band / rms if rms > 0 else band)
    return np.stack(rows).astype(np.float32)


def _interp_matrix(n_points: int, length: int) -> np.ndarray:
    """Linear interpolation from control points to per-sample values."""
    positions = np.linspace(0.0, n_points - 1.0, length)
    w = np.zeros((n_points, length), dtype=np.float32)
    lo = np.floor(positions).astype(int)
    hi = np.minimum(lo + 1, n_points - 1)
    frac = (positions - lo).astype(np.float32)
    w[lo, np.arange(length)] = 1.0 - frac
    w[hi, np.arange(length)] += frac
    return w


class FinsDecoder(Module):
    """(B, embed_dim) -> (B, rir_samples) waveform."""

    def __init__(self, fins: FinsConfig, sig: SignalConfig, rng: np.random.Generator):
        super().__init__()
        self.fins = fins
        self.early_samples = int(round(fins.early_ms * 1e-3 * sig.sample_rate))
        self.total_samples = sig.rir_samples
        self.late_samples = self.total_samples - self.early_samples
        up_total = int(np.prod(fins.upsample_stages))
        if fins.seed_len * up_total != self.early_samples:
            raise ShapeError(
                f"upsample stages {fins.upsample_stages} x seed_len {fins.seed_len} "
                f"produce {fins.seed_len * up_total} samples, need {self.early_samples}"
            )

        chans = [fins.embed_dim]
        for _ in fins.upsample_stages:
            chans.append(max(8, chans[-1] // 2))
        self.seed_proj = nn.Linear(fins.embed_dim, fins.embed_dim * fins.seed_len, rng)
        self.up = nn.ModuleList(
            [
                nn.ConvTranspose1d(chans[i], chans[i + 1], 2 * s, rng, stride=s, pad=s // 2)
                for i, s in enumerate(fins.upsample_stages)
            ]
        )
        self.up_act = nn.ModuleList([nn.PReLU(chans[i + 1]) for i in range(len(self.up))])
        self.early_out = nn.Conv1d(chans[-1], 1, 7, rng, stride=1, pad=3)

        # per band: one base level + (env_points - 1) positive decrements
        self.env_proj = nn.Linear(fins.embed_dim, fins.n_noise_bands * fins.env_points, rng)
        self.register_buffer(
            "band_noise",
            _octave_noise(fins.n_noise_bands, self.late_samples, sig.sample_rate, fins.noise_seed),
        )
        self._interp = _interp_matrix(fins.env_points, self.late_samples)
        self._cumsum = np.tril(np.ones((fins.env_points - 1, fins.env_points - 1), dtype=np.float32)).T

    def band_envelopes(self, w: Tensor) -> Tensor:
        """Positive, non-increasing envelope per noise band: (B, bands, late)."""
        f = self.fins
        raw = self.env_proj(w).reshape(-1, f.n_noise_bands, f.env_points)
        base = raw[:, :, 0:1]
        drops = nn.softplus(raw[:, :, 1:])  # positive per-segment decreases
        levels = base - drops @ Tensor(self._cumsum)  # cumulative decay
        ctrl = nn.softplus(nn.concat([base, levels], axis=2))
        return ctrl @ Tensor(self._interp)

    def __call__(self, w: Tensor) -> Tensor:
        if w.ndim != 2 or w.shape[1] != self.fins.embed_dim:
            raise ShapeError(f"expected (B, {self.fins.embed_dim}) embedding, got {w.shape}")
        b = w.shape[0]
        h = self.seed_proj(w).reshape(b, self.fins.embed_dim, self.fins.seed_len)
        for stage in range(len(self.up)):
            h = self.up[stage](h)
            h = h[:, :, : self._stage_len(stage)]  # odd strides overshoot by one
            h = self.up_act[stage](h)
        early = self.early_out(h).reshape(b, self.early_samples)

        env = self.band_envelopes(w)
        late = (env * Tensor(self.band_noise[None, :, :])).sum(axis=1)
        return nn.concat([early, late], axis=1)

    def _stage_len(self, stage: int) -> int:
        length = self.fins.seed_len
        for s in self.fins.upsample_stages[: stage + 1]:
            length *= s
        return length


class MultiResStftLoss:
    """Sum over resolutions of spectral convergence + log-magnitude L1.

    Both sides go through the same FFT magnitude computation, so the loss of
    a signal against itself is exactly zero.
    """

    EPS = 1e-7

    def __init__(self, resolutions: tuple[tuple[int, int], ...]):
        if len(resolutions) < 2:
            raise ShapeError("need at least 2 STFT resolutions")
        self.resolutions = resolutions
        self._windows = {
            frame: (0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(frame) / frame)).astype(np.float32)
            for frame, _ in resolutions
        }

    def _mag(self, x: Tensor, frame: int, hop: int) -> Tensor:
        frames = nn.frame_signal(x, frame, hop) * Tensor(self._windows[frame][None, None, :])
        return nn.rfft_mag(frames)

    def ref_mag(self, x: np.ndarray, frame: int, hop: int) -> np.ndarray:
        """Constant-side magnitudes, same arithmetic as the gradient path."""
        idx = np.arange(frame)[None, :] + hop * np.arange((x.shape[1] - frame) // hop + 1)[:, None]
        frames = x[:, idx] * self._windows[frame][None, None, :]
        spec = np.fft.rfft(frames, axis=-1)
        re = spec.real.astype(np.float32)
        im = spec.imag.astype(np.float32)
        return np.sqrt(re * re + im * im + np.float32(1e-12))

    def __call__(self, est: Tensor, ref: np.ndarray,
                 ref_mags: dict[tuple[int, int], np.ndarray] | None = None) -> Tensor:
        if est.shape != ref.shape:
            raise ShapeError(f"loss inputs differ in shape: {est.shape} vs {ref.shape}")
        ref = ref.astype(np.float32)
        total = Tensor(np.float32(0.0))
        for frame, hop in self.resolutions:
            mag_e = self._mag(est, frame, hop)
            mag_r = ref_mags[(frame, hop)] if ref_mags else self.ref_mag(ref, frame, hop)
            diff = mag_e - Tensor(mag_r)
            sc = nn.sqrt((diff * diff).sum()) * Tensor(
                np.float32(1.0 / np.sqrt(float((mag_r.astype(np.float64) ** 2).sum())))
            )
            lm = nn.abs_(nn.log(mag_e + Tensor(np.float32(self.EPS))) - Tensor(
                np.log(mag_r + np.float32(self.EPS))
            )).mean()
            total = total + sc + lm
        return total


def train_baseline(
    variant: str,
    arrays: dict,
    cfg: RunConfig,
    *,
    steps: int | None = None,
    seed: int | None = None,
    log_cb=None,
) -> dict:
    """Jointly train encoder + decoder on the multiresolution spectral loss."""
    tr = cfg.train
    seed = tr.seed if seed is None else seed
    rng_model = np.random.Generator(np.random.Philox(key=np.uint64(seed + 10)))
    rng_data = np.random.Generator(np.random.Philox(key=np.uint64(seed + 11)))

    enc_cfg = variant_encoder_config(cfg.encoder, variant)
    enc = AudioEncoder(enc_cfg, rng_model)
    dec = FinsDecoder(cfg.fins, cfg.signal, rng_model)
    loss_fn = MultiResStftLoss(cfg.fins.loss_resolutions)

    inputs = arrays["inputs"]  # (N, 2, L): [early, full]
    rirs = arrays["rirs"]  # (N, rir_samples)
    n = inputs.shape[0]
    channel = slice(0, 2) if enc_cfg.in_channels == 2 else slice(1, 2)  # full signal only

    total = tr.fins_steps if steps is None else steps
    named = enc.named_parameters("encoder.") + dec.named_parameters("fins.")
    opt = AdamW(named, lr=tr.lr, weight_decay=tr.weight_decay)
    schedule = exponential_decay(tr.lr, tr.gamma)

    if variant == "original" and min(tr.batch_size, n) < 2:
        raise ShapeError("batch norm variant needs batch size >= 2")

    enc.train()
    dec.train()
    log: list[tuple[int, float, float]] = []
    for step in range(total):
        idx = rng_data.integers(0, n, size=min(tr.batch_size, n))
        x = inputs[idx][:, channel, :]
        emb = enc(Tensor(x))
        est = dec(emb)
        opt.zero_grad()
        loss = loss_fn(est, rirs[idx])
        loss.backward()
        lr = schedule(step)
        opt.lr = lr
        opt.step()
        value = float(loss.data)
        if not np.isfinite(value):
            raise nn.OptimError(f"baseline loss diverged at step {step}")
        if step % tr.log_every == 0 or step == total - 1:
            log.append((step, value, lr))
            if log_cb:
                log_cb(step, value, lr)
    return {"encoder": enc, "decoder": dec, "log": log}
