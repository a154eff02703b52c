"""Mono RIFF WAV input/output (16-bit PCM and 32-bit float)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .sigproc import SignalError, Waveform

SUPPORTED_RATES = (16000, 48000)


def write_wav(path: str | Path, w: Waveform, fmt: str = "float32") -> None:
    """Write a mono WAV file; ``fmt`` is ``float32`` (bit-exact) or ``pcm16``."""
    if w.sample_rate not in SUPPORTED_RATES:
        raise SignalError(f"unsupported sample rate {w.sample_rate}, expected one of {SUPPORTED_RATES}")
    if fmt == "float32":
        data = w.samples.astype(np.float32)
    elif fmt == "pcm16":
        clipped = np.clip(w.samples, -1.0, 1.0)
        data = np.round(clipped * 32767.0).astype(np.int16)
    else:
        raise SignalError(f"unknown wav format {fmt!r}")
    wavfile.write(str(path), w.sample_rate, data)


def read_wav(path: str | Path) -> Waveform:
    """Read a mono 16-bit PCM or 32-bit float WAV file."""
    rate, data = wavfile.read(str(path))
    if data.ndim != 1:
        raise SignalError(f"{path}: expected mono audio, got shape {data.shape}")
    if rate not in SUPPORTED_RATES:
        raise SignalError(f"{path}: unsupported sample rate {rate}")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32767.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise SignalError(f"{path}: unsupported sample format {data.dtype}")
    return Waveform(samples, rate)
