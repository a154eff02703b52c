"""Velocity-matching training with condition dropout and prefix prompting."""

from __future__ import annotations

import numpy as np

from .. import nn
from ..config import RunConfig, SignalConfig
from ..encoder import AudioEncoder
from ..nn import AdamW, Tensor, warmup_cosine
from .model import DiT
from .schedule import sigma_from_logsnr
from .text import TextEncoder, null_mask_for
from .vparam import v_target, xt_from_x0


class TrainError(RuntimeError):
    pass


def prefix_frames_for_ms(ms: float, cfg: SignalConfig) -> int:
    """Latent frames whose center time lies within the first ``ms``."""
    if ms <= 0:
        return 0
    n = int(ms * 1e-3 * cfg.sample_rate // cfg.hop) + 1
    return min(n, cfg.latent_frames)


def train_step(
    model: DiT,
    x0: np.ndarray,
    cond,
    rng: np.random.Generator,
    sig_cfg: SignalConfig,
    sigma_min: float,
    sigma_max: float,
    cfg_dropout: float = 0.10,
    prefix_prob: float = 0.50,
    forced_null: np.ndarray | None = None,
) -> Tensor:
    """One loss evaluation + backward pass; the caller owns the optimizer.

    Per example: sigma is drawn log-uniformly; with probability
    ``cfg_dropout`` the condition is replaced by the learned null token; with
    probability ``prefix_prob`` a prefix of up to 50 ms of latent frames is
    overwritten with the clean target and masked out of the loss.
    """
    b = x0.shape[0]
    if b == 0:
        raise TrainError("empty batch")
    sigma = np.exp(rng.uniform(np.log(sigma_min), np.log(sigma_max), size=b))
    eps = rng.standard_normal(x0.shape)
    x_t = xt_from_x0(x0.astype(np.float64), eps, sigma).astype(np.float32)
    v_t = v_target(x0.astype(np.float64), eps, sigma).astype(np.float32)

    null_mask = rng.random(b) < cfg_dropout
    if forced_null is not None:
        null_mask |= forced_null

    loss_mask = np.ones((b, 1, x0.shape[2]), dtype=np.float32)
    use_prefix = rng.random(b) < prefix_prob
    for i in np.flatnonzero(use_prefix):
        ms = rng.uniform(0.0, sig_cfg.early_ms)
        nf = prefix_frames_for_ms(float(ms), sig_cfg)
        x_t[i, :, :nf] = x0[i, :, :nf]
        loss_mask[i, :, :nf] = 0.0

    pred = model(x_t, sigma, cond=cond, null_mask=null_mask)
    diff = pred - Tensor(v_t)
    masked = diff * diff * Tensor(loss_mask)
    denom = float(loss_mask.sum()) * x0.shape[1]
    loss = masked.sum() * Tensor(np.float32(1.0 / denom))
    loss.backward()
    return loss


def precompute_conditions(
    enc: AudioEncoder, inputs: np.ndarray, batch: int = 32
) -> np.ndarray:
    """Frozen-encoder embeddings for a whole dataset: (N, 1, embed_dim)."""
    enc.eval()
    out = []
    with nn.no_grad():
        for lo in range(0, inputs.shape[0], batch):
            out.append(enc(Tensor(inputs[lo : lo + batch])).data)
    return np.concatenate(out, axis=0)[:, None, :]


def train_diffusion(
    arrays: dict,
    cfg: RunConfig,
    *,
    encoder_state: dict[str, np.ndarray] | None = None,
    steps: int | None = None,
    unconditional: bool = False,
    seed: int | None = None,
    log_cb=None,
) -> dict:
    """Train the denoiser (and optionally the encoder) on dataset arrays.

    ``arrays`` needs ``latents`` (N, R, F); conditional training also needs
    ``inputs`` (N, C, L). Returns the model, encoder, and training log.
    """
    sig = cfg.signal
    tr = cfg.train
    seed = tr.seed if seed is None else seed
    rng_model = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    rng_data = np.random.Generator(np.random.Philox(key=np.uint64(seed + 1)))

    latents = arrays["latents"]
    n = latents.shape[0]
    model = DiT(cfg.dit, sig.latent_rows, sig.latent_frames, rng_model)

    enc = None
    conds_cache = None
    trainable = model.named_parameters("dit.")
    cfg_dropout = tr.cfg_dropout
    if unconditional:
        cfg_dropout = 1.0
    else:
        enc = AudioEncoder(cfg.encoder, rng_model)
        if encoder_state is not None:
            enc.load_state_dict(encoder_state)
        if tr.freeze_encoder:
            conds_cache = precompute_conditions(enc, arrays["inputs"])
        else:
            enc.train()
            trainable = trainable + enc.named_parameters("encoder.")

    total = tr.dit_steps if steps is None else steps
    opt = AdamW(trainable, lr=tr.lr, weight_decay=tr.weight_decay)
    schedule = warmup_cosine(tr.lr, tr.lr_end, total)
    sigma_min = sigma_from_logsnr(cfg.sampler.logsnr_max)
    sigma_max = sigma_from_logsnr(cfg.sampler.logsnr_min)

    log: list[tuple[int, float, float]] = []
    for step in range(total):
        idx = rng_data.integers(0, n, size=min(tr.batch_size, n))
        x0 = latents[idx]
        if unconditional:
            cond = None
        elif conds_cache is not None:
            cond = conds_cache[idx]
        else:
            cond = enc(Tensor(arrays["inputs"][idx])).reshape(len(idx), 1, cfg.dit.cond_dim)
        opt.zero_grad()
        loss = train_step(
            model, x0, cond, rng_data, sig, sigma_min, sigma_max,
            cfg_dropout=cfg_dropout, prefix_prob=tr.prefix_prob,
        )
        lr = schedule(step)
        opt.lr = lr
        opt.step()
        value = float(loss.data)
        if not np.isfinite(value):
            raise TrainError(f"loss diverged (non-finite) at step {step}")
        if step % tr.log_every == 0 or step == total - 1:
            log.append((step, value, lr))
            if log_cb:
                log_cb(step, value, lr)
    return {"dit": model, "encoder": enc, "log": log}


def text_finetune(
    arrays: dict,
    cfg: RunConfig,
    dit_state: dict[str, np.ndarray],
    *,
    steps: int | None = None,
    seed: int | None = None,
    log_cb=None,
) -> dict:
    """Fine-tune a trained denoiser with a fresh caption encoder (nothing frozen)."""
    sig = cfg.signal
    tr = cfg.train
    seed = tr.seed if seed is None else seed
    rng_model = np.random.Generator(np.random.Philox(key=np.uint64(seed + 2)))
    rng_data = np.random.Generator(np.random.Philox(key=np.uint64(seed + 3)))

    latents = arrays["latents"]
    captions = arrays["captions"]
    n = latents.shape[0]
    model = DiT(cfg.dit, sig.latent_rows, sig.latent_frames, rng_model)
    model.load_state_dict(dit_state)
    text_enc = TextEncoder(cfg.dit.cond_dim, rng_model)

    total = tr.text_steps if steps is None else steps
    trainable = model.named_parameters("dit.") + text_enc.named_parameters("text.")
    opt = AdamW(trainable, lr=tr.lr, weight_decay=tr.weight_decay)
    schedule = warmup_cosine(tr.lr, tr.lr_end, total)
    sigma_min = sigma_from_logsnr(cfg.sampler.logsnr_max)
    sigma_max = sigma_from_logsnr(cfg.sampler.logsnr_min)

    log: list[tuple[int, float, float]] = []
    for step in range(total):
        idx = rng_data.integers(0, n, size=min(tr.batch_size, n))
        caps = [captions[i] for i in idx]
        cond = text_enc(caps)
        opt.zero_grad()
        loss = train_step(
            model, latents[idx], cond, rng_data, sig, sigma_min, sigma_max,
            cfg_dropout=tr.cfg_dropout, prefix_prob=tr.prefix_prob,
            forced_null=null_mask_for(caps),
        )
        lr = schedule(step)
        opt.lr = lr
        opt.step()
        value = float(loss.data)
        if not np.isfinite(value):
            raise TrainError(f"loss diverged (non-finite) at step {step}")
        if step % tr.log_every == 0 or step == total - 1:
            log.append((step, value, lr))
            if log_cb:
                log_cb(step, value, lr)
    return {"dit": model, "text": text_enc, "log": log}
