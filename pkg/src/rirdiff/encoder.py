"""Reverberation-structure-aware audio encoder.

Stacked strided 1-D convolutions (kernel 15, stride 2) with per-timestep
channel normalization and PReLU, pooled over time into a 128-dim embedding.
The two-channel variant stacks the extracted early-reflection signal and the
full reverberant signal as input channels.
"""

from __future__ import annotations

import numpy as np

from . import nn
from .config import EncoderConfig, SignalConfig
from .nn import Module, ShapeError, Tensor
from .sigproc import SignalError, Waveform


class EncoderBlock(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int,
                 norm: str, rng: np.random.Generator):
        super().__init__()
        self.conv = nn.Conv1d(c_in, c_out, kernel, rng, stride=stride, pad=kernel // 2)
        if norm == "layer_norm":
            self.norm = nn.LayerNorm(c_out)
        elif norm == "batch_norm":
            self.norm = nn.BatchNorm1d(c_out)
        else:
            raise ShapeError(f"unknown norm kind {norm!r}")
        self.norm_kind = norm
        self.act = nn.PReLU(c_out, channel_axis=1)

    def __call__(self, x: Tensor) -> Tensor:
        y = self.conv(x)
        if self.norm_kind == "layer_norm":
            # normalize channels per time step: robust to long silent stretches
            y = self.norm(y.transpose(0, 2, 1)).transpose(0, 2, 1)
        else:
            y = self.norm(y)
        return self.act(y)


class AudioEncoder(Module):
    """(B, in_channels, L) -> (B, embed_dim) global embedding."""

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        blocks = []
        c_prev = cfg.in_channels
        for width in cfg.widths:
            blocks.append(EncoderBlock(c_prev, width, cfg.kernel, cfg.stride, cfg.norm, rng))
            c_prev = width
        self.blocks = nn.ModuleList(blocks)

    def features(self, x: Tensor) -> Tensor:
        """Pre-pooling feature map (B, embed_dim, L / stride^B)."""
        if x.ndim != 3 or x.shape[1] != self.cfg.in_channels:
            raise ShapeError(
                f"expected (B, {self.cfg.in_channels}, L) input, got {x.shape}"
            )
        for block in self.blocks:
            x = block(x)
        return x

    def __call__(self, x: Tensor) -> Tensor:
        pooled = nn.adaptive_avg_pool1d(self.features(x), 1)
        return pooled.reshape(x.shape[0], self.cfg.embed_dim)


def norm_variant(cfg: EncoderConfig, kind: str, rng: np.random.Generator) -> AudioEncoder:
    """Build the batch-norm (original) or layer-norm (fixed) encoder."""
    fields = {**cfg.__dict__, "norm": kind}
    return AudioEncoder(EncoderConfig(**fields), rng)


def stack_channels(waves: list[Waveform], cfg: SignalConfig) -> np.ndarray:
    """Validate and stack waveforms as encoder input channels (1, C, L)."""
    arrs = []
    for w in waves:
        if len(w) != cfg.segment_samples:
            raise SignalError(
                f"encoder input must be {cfg.segment_samples} samples "
                f"({cfg.segment_seconds} s at {cfg.sample_rate} Hz), got {len(w)}"
            )
        arrs.append(w.samples.astype(np.float32))
    return np.stack(arrs)[None, :, :]


def encode(enc: AudioEncoder, waves: list[Waveform], cfg: SignalConfig) -> np.ndarray:
    """Eval-mode embedding of one example; returns (embed_dim,) float32."""
    if len(waves) != enc.cfg.in_channels:
        raise SignalError(
            f"encoder expects {enc.cfg.in_channels} channel(s), got {len(waves)}"
        )
    enc.eval()
    with nn.no_grad():
        emb = enc(Tensor(stack_channels(waves, cfg)))
    return emb.data[0]
