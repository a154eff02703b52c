"""Evaluation harness: per-model acoustic-metric error tables and
distribution export for external plotting."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import acoustics
from .acoustics import AcousticParams, ErrorStats, MetricError
from .config import RunConfig
from .sigproc import Waveform
from .synthdata import load_example

Estimator = Callable[[dict], Waveform]

METRICS = ("t60", "edt", "drr", "c50")
PAE_METRICS = ("t60", "edt")  # dB-valued metrics report MSE/MAE only


def measure_params(w: Waveform, cfg: RunConfig) -> AcousticParams:
    """Acoustic parameters with a plain-curve fallback for short decays."""
    sig = cfg.signal
    try:
        t60_v = acoustics.t60(w)
    except MetricError:
        t60_v = acoustics.t60(w, compensate=False)
    try:
        edt_v = acoustics.edt(w)
    except MetricError:
        edt_v = acoustics.edt(w, compensate=False)
    return AcousticParams(
        t60=t60_v, edt=edt_v, drr=acoustics.drr(w, sig), c50=acoustics.c50(w)
    )


@dataclass
class EvalReport:
    models: list[str]
    stats: dict[str, dict[str, ErrorStats]]  # model -> metric -> stats
    ref_params: list[AcousticParams]
    est_params: dict[str, list[AcousticParams]]
    ids: list[str]

    def tsv(self) -> str:
        header = ["model"]
        for metric in METRICS:
            if metric in PAE_METRICS:
                header.append(f"{metric}_pae")
            header.append(f"{metric}_mse")
            header.append(f"{metric}_mae")
        lines = ["\t".join(header)]
        for model in self.models:
            row = [model]
            for metric in METRICS:
                s = self.stats[model][metric]
                if metric in PAE_METRICS:
                    row.append(f"{s.pae:.4f}")
                row.append(f"{s.mse:.6f}")
                row.append(f"{s.mae:.6f}")
            lines.append("\t".join(row))
        return "\n".join(lines) + "\n"


def evaluate(
    dirs: list[Path],
    estimators: dict[str, Estimator],
    cfg: RunConfig,
    progress=None,
) -> EvalReport:
    """Run every estimator over a held-out set with ground-truth RIRs."""
    ids: list[str] = []
    ref_params: list[AcousticParams] = []
    est_params: dict[str, list[AcousticParams]] = {m: [] for m in estimators}
    for i, d in enumerate(dirs):
        ex = load_example(d, cfg.signal)
        ids.append(d.name)
        ref_params.append(measure_params(ex["rir"], cfg))
        for model, fn in estimators.items():
            est_params[model].append(measure_params(fn(ex), cfg))
        if progress:
            progress(i + 1, len(dirs))

    stats: dict[str, dict[str, ErrorStats]] = {}
    for model in estimators:
        stats[model] = {}
        for metric in METRICS:
            est = [getattr(p, metric) for p in est_params[model]]
            ref = [getattr(p, metric) for p in ref_params]
            stats[model][metric] = acoustics.error_stats(
                est, ref, include_pae=metric in PAE_METRICS
            )
    return EvalReport(
        models=list(estimators),
        stats=stats,
        ref_params=ref_params,
        est_params=est_params,
        ids=ids,
    )


DIST_HEADER = "source\tid\tt60\tedt\tdrr"


def export_dist(report: EvalReport) -> str:
    """(t60, edt, drr) triples for ground truth and every model's estimates."""
    lines = [DIST_HEADER]
    for i, p in enumerate(report.ref_params):
        lines.append(f"reference\t{report.ids[i]}\t{p.t60:.6f}\t{p.edt:.6f}\t{p.drr:.4f}")
    for model in report.models:
        for i, p in enumerate(report.est_params[model]):
            lines.append(f"{model}\t{report.ids[i]}\t{p.t60:.6f}\t{p.edt:.6f}\t{p.drr:.4f}")
    return "\n".join(lines) + "\n"


def load_training_arrays(dirs: list[Path], cfg: RunConfig) -> dict:
    """Stack a dataset into float32 training arrays."""
    inputs, latents, rirs, captions = [], [], [], []
    for d in dirs:
        ex = load_example(d, cfg.signal)
        inputs.append(
            np.stack(
                [
                    ex["x_early"].samples.astype(np.float32),
                    ex["x_full"].samples.astype(np.float32),
                ]
            )
        )
        latents.append(ex["latent"].values.astype(np.float32))
        rirs.append(ex["rir"].samples.astype(np.float32))
        captions.append(ex["caption"])
    return {
        "inputs": np.stack(inputs),
        "latents": np.stack(latents),
        "rirs": np.stack(rirs),
        "captions": captions,
    }
