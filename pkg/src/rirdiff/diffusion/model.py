"""Transformer denoiser over latent spectrogram frames.

Tokens are groups of latent frames. Each block applies RMS normalization
modulated per noise level (adaptive scale/shift from the timestep embedding,
zero-initialized gates on every residual branch), self-attention over the
latent tokens, cross-attention to the condition tokens, a second modulated
RMS normalization, and a linear layer.
"""

from __future__ import annotations

import numpy as np

from .. import nn
from ..config import DiTConfig
from ..nn import Module, ShapeError, Tensor

SINUSOID_DIM = 64


class TimestepEmbed(Module):
    """Sinusoidal features of ln(sigma) through a 2-layer network."""

    def __init__(self, hidden: int, rng: np.random.Generator):
        super().__init__()
        half = SINUSOID_DIM // 2
        self.register_buffer(
            "freqs", np.exp(np.linspace(0.0, np.log(200.0), half)).astype(np.float32)
        )
        self.fc1 = nn.Linear(SINUSOID_DIM, hidden, rng)
        self.fc2 = nn.Linear(hidden, hidden, rng)

    def __call__(self, log_sigma: np.ndarray) -> Tensor:
        args = log_sigma.astype(np.float32)[:, None] * self.freqs[None, :]
        feats = np.concatenate([np.sin(args), np.cos(args)], axis=1)
        return self.fc2(nn.gelu(self.fc1(Tensor(feats))))


class DiTBlock(Module):
    def __init__(self, cfg: DiTConfig, rng: np.random.Generator, drop_seed: int):
        super().__init__()
        d = cfg.hidden
        self.d = d
        self.norm1 = nn.RMSNorm(d, gain=False)
        self.attn = nn.MultiHeadAttention(d, cfg.heads, rng, qk_norm=True, self_attention=True)
        self.cross = nn.MultiHeadAttention(d, cfg.heads, rng, qk_norm=True)
        self.norm2 = nn.RMSNorm(d, gain=False)
        self.linear = nn.Linear(d, d, rng)
        # scale/shift/gate pairs for both norm sites; gates start at zero so
        # the block is the identity at initialization
        self.ada = nn.Linear(d, 6 * d, rng, zero_init=True)
        self.drop = nn.Dropout(cfg.dropout, seed=drop_seed)

    def __call__(self, x: Tensor, t_emb: Tensor, cond: Tensor) -> Tensor:
        d = self.d
        mods = self.ada(t_emb)  # (B, 6d)
        shift1 = mods[:, 0:d].reshape(-1, 1, d)
        scale1 = mods[:, d : 2 * d].reshape(-1, 1, d)
        gate1 = mods[:, 2 * d : 3 * d].reshape(-1, 1, d)
        shift2 = mods[:, 3 * d : 4 * d].reshape(-1, 1, d)
        scale2 = mods[:, 4 * d : 5 * d].reshape(-1, 1, d)
        gate2 = mods[:, 5 * d : 6 * d].reshape(-1, 1, d)

        h = self.norm1(x) * (scale1 + 1.0) + shift1
        h = self.attn(h)
        h = self.cross(h, cond)
        x = x + gate1 * self.drop(h)

        h2 = self.norm2(x) * (scale2 + 1.0) + shift2
        x = x + gate2 * self.drop(self.linear(h2))
        return x


class DiT(Module):
    """Predicts the velocity target for a noised latent at a given sigma."""

    def __init__(self, cfg: DiTConfig, latent_rows: int, latent_frames: int,
                 rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        self.rows = latent_rows
        self.frames = latent_frames
        self.n_tokens = -(-latent_frames // cfg.patch)  # ceil
        self.pad_frames = self.n_tokens * cfg.patch - latent_frames
        token_dim = latent_rows * cfg.patch

        self.in_proj = nn.Linear(token_dim, cfg.hidden, rng)
        self.pos = nn.Parameter(
            (rng.standard_normal((1, self.n_tokens, cfg.hidden)) * 0.02).astype(np.float32)
        )
        self.cond_proj = nn.Linear(cfg.cond_dim, cfg.hidden, rng)
        self.null_cond = nn.Parameter(
            (rng.standard_normal((1, 1, cfg.cond_dim)) * 0.02).astype(np.float32)
        )
        self.t_embed = TimestepEmbed(cfg.hidden, rng)
        self.blocks = nn.ModuleList(
            [DiTBlock(cfg, rng, drop_seed=int(rng.integers(2**62)) ) for _ in range(cfg.layers)]
        )
        self.final_norm = nn.RMSNorm(cfg.hidden, gain=False)
        self.final_ada = nn.Linear(cfg.hidden, 2 * cfg.hidden, rng, zero_init=True)
        self.head = nn.Linear(cfg.hidden, token_dim, rng, zero_init=True)

    # -- patching -----------------------------------------------------------

    def _patchify(self, x: np.ndarray) -> np.ndarray:
        b = x.shape[0]
        if self.pad_frames:
            x = np.pad(x, ((0, 0), (0, 0), (0, self.pad_frames)))
        x = x.reshape(b, self.rows, self.n_tokens, self.cfg.patch)
        return x.transpose(0, 2, 3, 1).reshape(b, self.n_tokens, self.cfg.patch * self.rows)

    def _unpatchify(self, y: Tensor) -> Tensor:
        b = y.shape[0]
        y = y.reshape(b, self.n_tokens, self.cfg.patch, self.rows)
        y = y.transpose(0, 3, 1, 2).reshape(b, self.rows, self.n_tokens * self.cfg.patch)
        if self.pad_frames:
            y = y[:, :, : self.frames]
        return y

    # -- conditioning -------------------------------------------------------

    def _condition(self, cond: Tensor | np.ndarray | None, batch: int,
                   null_mask: np.ndarray | None) -> Tensor:
        if cond is None:
            tokens = self.null_cond * Tensor(np.ones((batch, 1, 1), dtype=np.float32))
            return self.cond_proj(tokens)
        tokens = cond if isinstance(cond, Tensor) else Tensor(cond.astype(np.float32))
        if tokens.ndim != 3 or tokens.shape[2] != self.cfg.cond_dim:
            raise ShapeError(
                f"condition must be (B, S, {self.cfg.cond_dim}), got {tokens.shape}"
            )
        if null_mask is not None and null_mask.any():
            keep = (~null_mask).astype(np.float32)[:, None, None]
            null = self.null_cond * Tensor(
                np.ones((batch, tokens.shape[1], 1), dtype=np.float32)
            )
            tokens = tokens * Tensor(keep) + null * Tensor(1.0 - keep)
        return self.cond_proj(tokens)

    # -- forward ------------------------------------------------------------

    def __call__(self, x_t: np.ndarray, sigma: np.ndarray,
                 cond: Tensor | np.ndarray | None = None,
                 null_mask: np.ndarray | None = None) -> Tensor:
        if x_t.ndim != 3 or x_t.shape[1] != self.rows or x_t.shape[2] != self.frames:
            raise ShapeError(
                f"latent must be (B, {self.rows}, {self.frames}), got {x_t.shape}"
            )
        b = x_t.shape[0]
        sigma = np.broadcast_to(np.asarray(sigma, dtype=np.float64), (b,))
        t_emb = self.t_embed(np.log(sigma))
        c = self._condition(cond, b, null_mask)

        h = self.in_proj(Tensor(self._patchify(x_t.astype(np.float32)))) + self.pos
        for block in self.blocks:
            h = block(h, t_emb, c)

        mods = self.final_ada(t_emb)
        d = self.cfg.hidden
        shift = mods[:, 0:d].reshape(-1, 1, d)
        scale = mods[:, d : 2 * d].reshape(-1, 1, d)
        y = self.final_norm(h) * (scale + 1.0) + shift
        return self._unpatchify(self.head(y))
