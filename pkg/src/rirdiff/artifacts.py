"""Model bundles on disk: one checkpoint container plus a config sidecar."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .config import RunConfig, load_config, paper_config, save_config
from .nn import Module, load_checkpoint, save_checkpoint


def sidecar_path(path: str | Path) -> Path:
    return Path(str(path) + ".cfg")


def save_bundle(path: str | Path, cfg: RunConfig, parts: dict[str, Module]) -> None:
    """Write modules under name prefixes ("dit.", "encoder.", ...) plus config."""
    arrays: dict[str, np.ndarray] = {}
    for prefix, module in parts.items():
        arrays.update(module.state_dict(prefix + "."))
    save_checkpoint(path, arrays)
    save_config(cfg, sidecar_path(path))


def load_bundle(path: str | Path) -> tuple[RunConfig, dict[str, dict[str, np.ndarray]]]:
    """Read a bundle back as (config, {prefix: state_dict})."""
    arrays = load_checkpoint(path)
    cfg = load_config(sidecar_path(path), base=paper_config())
    groups: dict[str, dict[str, np.ndarray]] = {}
    for name, arr in arrays.items():
        prefix, rest = name.split(".", 1)
        groups.setdefault(prefix, {})[rest] = arr
    return cfg, groups
