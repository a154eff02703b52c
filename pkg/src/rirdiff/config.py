"""Run configuration: presets, key=value config files, flag overrides.

Every tunable lives in one of the section dataclasses below and is addressable
as ``section.field`` both in config files and on the command line, so a run is
fully reproducible from its logged configuration.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    """Raised for malformed keys, values, or inconsistent settings."""


@dataclass
class SignalConfig:
    sample_rate: int = 48000
    rir_seconds: float = 1.0
    segment_seconds: float = 5.0
    frame: int = 128
    hop: int = 64
    mu: float = 255.0
    comp_alpha: float = 0.3
    comp_beta: float = 2.0
    early_ms: float = 50.0
    direct_ms: float = 2.5
    onset_threshold_db: float = 20.0

    @property
    def rir_samples(self) -> int:
        return int(round(self.rir_seconds * self.sample_rate))

    @property
    def segment_samples(self) -> int:
        return int(round(self.segment_seconds * self.sample_rate))

    @property
    def freq_bins(self) -> int:
        return self.frame // 2 + 1

    @property
    def latent_frames(self) -> int:
        return self.rir_samples // self.hop + 1

    @property
    def latent_rows(self) -> int:
        return 2 * self.freq_bins


@dataclass
class EncoderConfig:
    in_channels: int = 2
    widths: tuple[int, ...] = (32, 64, 128, 256, 256, 256, 128, 128)
    kernel: int = 15
    stride: int = 2
    embed_dim: int = 128
    norm: str = "layer_norm"  # or "batch_norm"


@dataclass
class DiTConfig:
    hidden: int = 256
    layers: int = 8
    heads: int = 8
    dropout: float = 0.1
    patch: int = 2
    cond_dim: int = 128


@dataclass
class SamplerConfig:
    steps: int = 24
    guidance: float = 3.0
    logsnr_max: float = 5.0
    logsnr_min: float = -8.0
    rho: float = 7.0


@dataclass
class TrainConfig:
    batch_size: int = 256
    fins_steps: int = 60000
    dit_steps: int = 100000
    text_steps: int = 20000
    lr: float = 1e-4
    lr_end: float = 1e-5
    gamma: float = 0.999996
    weight_decay: float = 0.01
    cfg_dropout: float = 0.10
    prefix_prob: float = 0.50
    freeze_encoder: bool = False
    seed: int = 0
    log_every: int = 50


@dataclass
class FinsConfig:
    embed_dim: int = 128
    early_ms: float = 50.0
    n_noise_bands: int = 8
    upsample_stages: tuple[int, ...] = (5, 5, 4, 3, 2)
    seed_len: int = 4
    env_points: int = 12
    noise_seed: int = 1234
    # (frame, hop) pairs for the multiresolution spectral loss
    loss_resolutions: tuple[tuple[int, int], ...] = ((2048, 512), (1024, 256), (512, 128))


@dataclass
class DataConfig:
    n_train: int = 2000
    n_eval: int = 200
    t60_min: float = 0.15
    t60_max: float = 1.4
    drr_min: float = -5.0
    drr_max: float = 20.0
    max_early_taps: int = 6
    augment: bool = True
    seed: int = 7


@dataclass
class RunConfig:
    signal: SignalConfig = field(default_factory=SignalConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    dit: DiTConfig = field(default_factory=DiTConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    fins: FinsConfig = field(default_factory=FinsConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def validate(self) -> "RunConfig":
        sig = self.signal
        if sig.sample_rate <= 0 or sig.frame <= 0 or sig.hop <= 0:
            raise ConfigError("signal.sample_rate, signal.frame, signal.hop must be positive")
        if sig.frame % sig.hop != 0:
            raise ConfigError(f"signal.hop ({sig.hop}) must divide signal.frame ({sig.frame})")
        if sig.rir_samples % sig.hop != 0:
            raise ConfigError(
                f"RIR length {sig.rir_samples} must be a multiple of hop {sig.hop}"
            )
        if self.encoder.widths[-1] != self.encoder.embed_dim:
            raise ConfigError(
                f"encoder.widths must end at embed_dim "
                f"({self.encoder.widths[-1]} != {self.encoder.embed_dim})"
            )
        if self.dit.hidden % self.dit.heads != 0:
            raise ConfigError(
                f"dit.hidden ({self.dit.hidden}) not divisible by dit.heads ({self.dit.heads})"
            )
        if not 0.0 <= self.dit.dropout < 1.0:
            raise ConfigError(f"dit.dropout must be in [0, 1), got {self.dit.dropout}")
        if self.sampler.steps < 2:
            raise ConfigError("sampler.steps must be >= 2")
        return self


def paper_config() -> RunConfig:
    """Full-scale 48 kHz configuration; dimensions match the published setup."""
    return RunConfig().validate()


def desk_config() -> RunConfig:
    """Small configuration that trains in hours on a few CPU cores."""
    cfg = RunConfig(
        signal=SignalConfig(sample_rate=16000, rir_seconds=0.5, segment_seconds=1.0),
        encoder=EncoderConfig(widths=(16, 32, 64, 128)),
        dit=DiTConfig(hidden=192, layers=6, heads=4, dropout=0.1, patch=1),
        train=TrainConfig(
            batch_size=16,
            fins_steps=1600,
            dit_steps=4000,
            text_steps=1800,
            lr=3e-4,
            lr_end=3e-5,
            gamma=0.9995,
            freeze_encoder=True,
            log_every=50,
        ),
        fins=FinsConfig(upsample_stages=(5, 5, 4, 2), loss_resolutions=((1024, 256), (512, 128), (256, 64))),
    )
    return cfg.validate()


PRESETS = {"paper": paper_config, "desk": desk_config}

CONFIG_ENV_VAR = "RIRDIFF_CONFIG"

_SECTIONS = ("signal", "encoder", "dit", "sampler", "train", "fins", "data")


def flat_items(cfg: RunConfig) -> dict[str, object]:
    """All settings as a flat ``section.field -> value`` mapping."""
    out: dict[str, object] = {}
    for sec in _SECTIONS:
        obj = getattr(cfg, sec)
        for f in dataclasses.fields(obj):
            out[f"{sec}.{f.name}"] = getattr(obj, f.name)
    return out


def _parse_value(raw: str, like: object) -> object:
    raw = raw.strip()
    if isinstance(like, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected boolean, got {raw!r}")
    if isinstance(like, int):
        return int(raw)
    if isinstance(like, float):
        return float(raw)
    if isinstance(like, tuple):
        if not raw:
            return ()
        parts = [p.strip() for p in raw.split(",")]
        if like and isinstance(like[0], tuple):
            # nested pairs use a "f:h" inner separator, e.g. "2048:512,1024:256"
            return tuple(tuple(int(q) for q in p.split(":")) for p in parts)
        return tuple(int(p) for p in parts)
    return raw


def set_key(cfg: RunConfig, key: str, raw: str) -> None:
    """Assign one ``section.field`` from its textual form."""
    if "." not in key:
        raise ConfigError(f"config key {key!r} must look like section.field")
    sec, name = key.split(".", 1)
    if sec not in _SECTIONS:
        raise ConfigError(f"unknown config section {sec!r}")
    obj = getattr(cfg, sec)
    if not hasattr(obj, name):
        raise ConfigError(f"unknown config key {key!r}")
    current = getattr(obj, name)
    setattr(obj, name, _parse_value(raw, current))


def format_value(value: object) -> str:
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ",".join(":".join(str(q) for q in p) for p in value)
        return ",".join(str(p) for p in value)
    return str(value)


def save_config(cfg: RunConfig, path: str | Path) -> None:
    lines = [f"{k}={format_value(v)}" for k, v in flat_items(cfg).items()]
    Path(path).write_text("\n".join(lines) + "\n")


def load_config(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    """Read a key=value file on top of ``base`` (default: paper preset)."""
    cfg = base if base is not None else paper_config()
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, raw = line.split("=", 1)
        set_key(cfg, key.strip(), raw)
    return cfg.validate()


def default_config() -> RunConfig:
    """Paper preset, or the file named by $RIRDIFF_CONFIG when set."""
    path = os.environ.get(CONFIG_ENV_VAR)
    if path:
        return load_config(path)
    return paper_config()
