"""End-to-end estimation pipelines shared by the CLI, evaluation, and tests."""

from __future__ import annotations

import numpy as np

from . import nn
from .baseline import FinsDecoder
from .config import RunConfig
from .diffusion import (
    DiT,
    TextEncoder,
    make_denoiser,
    sample,
    sampling_prefix_frames,
    schedule_from_config,
)
from .encoder import AudioEncoder, encode
from .sigproc import (
    RirLatent,
    SignalError,
    Waveform,
    convolve,
    latent_to_rir,
    normalize_rir,
    rir_to_latent,
)


def estimate_fins(x_waves: list[Waveform], enc: AudioEncoder, dec: FinsDecoder,
                  cfg: RunConfig) -> Waveform:
    """Deterministic baseline estimate (un-normalized decoder output)."""
    emb = encode(enc, x_waves, cfg.signal)
    dec.eval()
    with nn.no_grad():
        out = dec(nn.Tensor(emb[None, :]))
    return Waveform(out.data[0].astype(np.float64), cfg.signal.sample_rate)


def sample_latents(
    dit: DiT,
    cond: np.ndarray | None,
    n: int,
    cfg: RunConfig,
    *,
    steps: int | None = None,
    guidance: float | None = None,
    seed: int = 0,
    prefix: tuple[np.ndarray, int] | None = None,
) -> np.ndarray:
    """Draw ``n`` latents for one condition; (n, rows, frames)."""
    sig = cfg.signal
    sch = schedule_from_config(cfg.sampler, steps)
    guidance = cfg.sampler.guidance if guidance is None else guidance
    if cond is not None:
        cond = np.broadcast_to(cond, (n,) + cond.shape[-2:]).astype(np.float32)
    dit.eval()
    denoise = make_denoiser(dit, cond, guidance)
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    return sample(denoise, (n, sig.latent_rows, sig.latent_frames), sch, rng, prefix=prefix)


def estimate_diffusion(
    x_waves: list[Waveform],
    enc: AudioEncoder,
    dit: DiT,
    cfg: RunConfig,
    *,
    steps: int | None = None,
    guidance: float | None = None,
    seed: int = 0,
    prefix: tuple[np.ndarray, int] | None = None,
) -> Waveform:
    """Blind estimate: encode the reverberant input, sample one latent, decode."""
    emb = encode(enc, x_waves, cfg.signal)
    latent = sample_latents(
        dit, emb[None, :], 1, cfg, steps=steps, guidance=guidance, seed=seed, prefix=prefix
    )[0]
    return latent_to_rir(RirLatent(latent), cfg.signal)


def estimate_hybrid(
    x_waves: list[Waveform],
    fins_enc: AudioEncoder,
    fins_dec: FinsDecoder,
    diff_enc: AudioEncoder,
    dit: DiT,
    cfg: RunConfig,
    prompt_ms: float,
    *,
    steps: int | None = None,
    guidance: float | None = None,
    seed: int = 0,
) -> Waveform:
    """Baseline early prediction completed by the generative tail."""
    if prompt_ms > cfg.signal.early_ms:
        raise SignalError(
            f"prompt_ms {prompt_ms} exceeds the trained prefix limit "
            f"{cfg.signal.early_ms} ms"
        )
    base = normalize_rir(estimate_fins(x_waves, fins_enc, fins_dec, cfg), cfg.signal)
    if prompt_ms <= 0:
        return estimate_diffusion(
            x_waves, diff_enc, dit, cfg, steps=steps, guidance=guidance, seed=seed
        )
    latent = rir_to_latent(base, cfg.signal).values.astype(np.float32)
    n_prefix = sampling_prefix_frames(prompt_ms, cfg.signal)
    return estimate_diffusion(
        x_waves, diff_enc, dit, cfg,
        steps=steps, guidance=guidance, seed=seed, prefix=(latent, n_prefix),
    )


def complete_rir(
    partial: Waveform,
    dit: DiT,
    cfg: RunConfig,
    prompt_ms: float,
    *,
    steps: int | None = None,
    seed: int = 0,
) -> Waveform:
    """Unconditional completion of an RIR from its early portion."""
    if prompt_ms > cfg.signal.early_ms:
        raise SignalError(
            f"prompt_ms {prompt_ms} exceeds the trained prefix limit "
            f"{cfg.signal.early_ms} ms"
        )
    latent = rir_to_latent(partial, cfg.signal).values.astype(np.float32)
    n_prefix = sampling_prefix_frames(prompt_ms, cfg.signal)
    out = sample_latents(
        dit, None, 1, cfg, steps=steps, guidance=1.0, seed=seed,
        prefix=(latent, n_prefix),
    )[0]
    return latent_to_rir(RirLatent(out), cfg.signal)


def text_to_rirs(
    caption: str,
    dit: DiT,
    text_enc: TextEncoder,
    cfg: RunConfig,
    n: int,
    *,
    steps: int | None = None,
    guidance: float | None = None,
    seed: int = 0,
) -> list[Waveform]:
    """Generate ``n`` RIR variations for one caption."""
    text_enc.eval()
    if caption.strip():
        with nn.no_grad():
            cond = text_enc([caption]).data[0]
    else:
        cond = None
    latents = sample_latents(
        dit, cond, n, cfg, steps=steps,
        guidance=(1.0 if cond is None else guidance), seed=seed,
    )
    return [latent_to_rir(RirLatent(l), cfg.signal) for l in latents]


def acoustic_match(source: Waveform, rir: Waveform) -> Waveform:
    """Apply estimated acoustics to new content."""
    return convolve(source, rir)
