"""Command-line surface: dataset synthesis, training, estimation, matching,
completion, text-to-RIR, evaluation, and distribution export.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

import numpy as np

from . import acoustics, baseline, config, evalrep, pipeline, synthdata
from .artifacts import load_bundle, save_bundle
from .config import PRESETS, ConfigError, RunConfig
from .diffusion import DiT, TextEncoder, text_finetune, train_diffusion
from .diffusion.sampler import NumericalError
from .diffusion.text import VocabularyError
from .diffusion.train import TrainError
from .encoder import AudioEncoder
from .evalrep import measure_params
from .nn import CheckpointError, OptimError, ShapeError
from .sigproc import SignalError, Waveform, normalize_rir
from .wavio import read_wav, write_wav

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


def resolve_config(args: argparse.Namespace) -> RunConfig:
    if args.config:
        cfg = config.load_config(args.config, base=PRESETS[args.preset]())
    elif os.environ.get(config.CONFIG_ENV_VAR):
        cfg = config.load_config(os.environ[config.CONFIG_ENV_VAR], base=PRESETS[args.preset]())
    else:
        cfg = PRESETS[args.preset]()
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        config.set_key(cfg, key.strip(), raw)
    return cfg.validate()


# ---------------------------------------------------------------------------
# bundle loading helpers
# ---------------------------------------------------------------------------

def _load_fins(path: str) -> tuple[RunConfig, AudioEncoder, baseline.FinsDecoder]:
    cfg, groups = load_bundle(path)
    if "fins" not in groups or "encoder" not in groups:
        raise CheckpointError(f"{path}: not a baseline bundle (needs encoder.* and fins.*)")
    rng = _rng_for(0)
    enc = AudioEncoder(cfg.encoder, rng)
    enc.load_state_dict(groups["encoder"])
    dec = baseline.FinsDecoder(cfg.fins, cfg.signal, rng)
    dec.load_state_dict(groups["fins"])
    return cfg, enc, dec


def _load_diffusion(path: str) -> tuple[RunConfig, AudioEncoder | None, DiT]:
    cfg, groups = load_bundle(path)
    if "dit" not in groups:
        raise CheckpointError(f"{path}: not a diffusion bundle (needs dit.*)")
    rng = _rng_for(0)
    sig = cfg.signal
    dit = DiT(cfg.dit, sig.latent_rows, sig.latent_frames, rng)
    dit.load_state_dict(groups["dit"])
    enc = None
    if "encoder" in groups:
        enc = AudioEncoder(cfg.encoder, rng)
        enc.load_state_dict(groups["encoder"])
    return cfg, enc, dit


def _load_text(path: str) -> tuple[RunConfig, DiT, TextEncoder]:
    cfg, groups = load_bundle(path)
    if "dit" not in groups or "text" not in groups:
        raise CheckpointError(f"{path}: not a text bundle (needs dit.* and text.*)")
    rng = _rng_for(0)
    sig = cfg.signal
    dit = DiT(cfg.dit, sig.latent_rows, sig.latent_frames, rng)
    dit.load_state_dict(groups["dit"])
    text_enc = TextEncoder(cfg.dit.cond_dim, rng)
    text_enc.load_state_dict(groups["text"])
    return cfg, dit, text_enc


def _read_inputs(cfg: RunConfig, input_path: str, early_path: str | None,
                 channels: int) -> list[Waveform]:
    full = read_wav(input_path)
    if full.sample_rate != cfg.signal.sample_rate:
        raise SignalError(
            f"{input_path}: sample rate {full.sample_rate} != configured "
            f"{cfg.signal.sample_rate}"
        )
    if channels == 1:
        return [full]
    if not early_path:
        raise SignalError("this model needs the extracted early channel: pass --early")
    early = read_wav(early_path)
    return [early, full]


def _write_log(path: Path, log: list[tuple[int, float, float]]) -> None:
    rows = ["step\tloss\tlr"] + [f"{s}\t{l:.6f}\t{lr:.8f}" for s, l, lr in log]
    path.write_text("\n".join(rows) + "\n")


def _print_params(w: Waveform, cfg: RunConfig, label: str) -> None:
    p = measure_params(w, cfg)
    bins = acoustics.level_bins(p)
    print(
        f"{label}: t60={p.t60:.3f}s edt={p.edt:.3f}s drr={p.drr:.2f}dB "
        f"c50={p.c50:.2f}dB bins=({bins.drr_level},{bins.t60_level})"
    )


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth_data(args, cfg: RunConfig) -> int:
    dirs = synthdata.build_dataset(
        args.out, args.n, cfg, seed=args.seed, captions=args.captions
    )
    print(f"wrote {len(dirs)} examples under {args.out}")
    return 0


def cmd_train_fins(args, cfg: RunConfig) -> int:
    dirs = synthdata.example_dirs(args.data)
    arrays = evalrep.load_training_arrays(dirs, cfg)
    result = baseline.train_baseline(
        args.variant, arrays, cfg, steps=args.steps,
        log_cb=lambda s, l, lr: print(f"step {s}: loss {l:.4f} lr {lr:.2e}"),
    )
    out_cfg = dataclasses.replace(
        cfg, encoder=baseline.variant_encoder_config(cfg.encoder, args.variant)
    )
    save_bundle(args.out, out_cfg, {"encoder": result["encoder"], "fins": result["decoder"]})
    _write_log(Path(args.out + ".log"), result["log"])
    print(f"saved baseline bundle to {args.out} (final loss {result['log'][-1][1]:.4f})")
    return 0


def cmd_train_diffusion(args, cfg: RunConfig) -> int:
    dirs = synthdata.example_dirs(args.data)
    arrays = evalrep.load_training_arrays(dirs, cfg)
    if args.channels == 1:
        arrays["inputs"] = arrays["inputs"][:, 1:2, :]
        cfg.encoder = config.EncoderConfig(**{**cfg.encoder.__dict__, "in_channels": 1})
    encoder_state = None
    if args.warm_init:
        _, groups = load_bundle(args.warm_init)
        if "encoder" not in groups:
            raise CheckpointError(f"{args.warm_init}: bundle has no encoder weights")
        encoder_state = groups["encoder"]
    result = train_diffusion(
        arrays, cfg,
        encoder_state=encoder_state,
        steps=args.steps,
        unconditional=args.unconditional,
        log_cb=lambda s, l, lr: print(f"step {s}: loss {l:.4f} lr {lr:.2e}"),
    )
    parts = {"dit": result["dit"]}
    if result["encoder"] is not None:
        parts["encoder"] = result["encoder"]
    save_bundle(args.out, cfg, parts)
    _write_log(Path(args.out + ".log"), result["log"])
    print(f"saved diffusion bundle to {args.out} (final loss {result['log'][-1][1]:.4f})")
    return 0


def cmd_finetune_text(args, cfg: RunConfig) -> int:
    dirs = synthdata.example_dirs(args.data)
    arrays = evalrep.load_training_arrays(dirs, cfg)
    base_cfg, groups = load_bundle(args.init)
    if "dit" not in groups:
        raise CheckpointError(f"{args.init}: bundle has no dit weights")
    result = text_finetune(
        arrays, base_cfg, groups["dit"], steps=args.steps,
        log_cb=lambda s, l, lr: print(f"step {s}: loss {l:.4f} lr {lr:.2e}"),
    )
    save_bundle(args.out, base_cfg, {"dit": result["dit"], "text": result["text"]})
    _write_log(Path(args.out + ".log"), result["log"])
    print(f"saved text bundle to {args.out} (final loss {result['log'][-1][1]:.4f})")
    return 0


def _estimate(args, mode: str) -> tuple[RunConfig, Waveform]:
    if mode == "fins":
        cfg, enc, dec = _load_fins(args.model)
        waves = _read_inputs(cfg, args.input, args.early, enc.cfg.in_channels)
        return cfg, pipeline.estimate_fins(waves, enc, dec, cfg)
    if mode == "diffusion":
        cfg, enc, dit = _load_diffusion(args.model)
        if enc is None:
            raise CheckpointError(f"{args.model}: unconditional bundle cannot estimate")
        waves = _read_inputs(cfg, args.input, args.early, enc.cfg.in_channels)
        return cfg, pipeline.estimate_diffusion(
            waves, enc, dit, cfg, steps=args.steps, guidance=args.guidance, seed=args.seed
        )
    if mode == "hybrid":
        if not args.fins_model:
            raise ConfigError("--mode hybrid needs --fins-model")
        cfg, enc, dit = _load_diffusion(args.model)
        fins_cfg, fenc, fdec = _load_fins(args.fins_model)
        waves = _read_inputs(cfg, args.input, args.early,
                             max(enc.cfg.in_channels, fenc.cfg.in_channels))
        def pick(n):
            return waves if n == 2 else [waves[-1]]
        return cfg, pipeline.estimate_hybrid(
            pick(fenc.cfg.in_channels) if fenc.cfg.in_channels != enc.cfg.in_channels else waves,
            fenc, fdec, enc, dit, cfg, args.prompt_ms,
            steps=args.steps, guidance=args.guidance, seed=args.seed,
        )
    raise ConfigError(f"unknown mode {mode!r}")


def cmd_estimate(args, cfg: RunConfig) -> int:
    model_cfg, est = _estimate(args, args.mode)
    out = normalize_rir(est, model_cfg.signal)
    write_wav(args.out, out)
    _print_params(out, model_cfg, f"estimated RIR ({args.mode})")
    print(f"wrote {args.out}")
    return 0


def cmd_match(args, cfg: RunConfig) -> int:
    source = read_wav(args.source)
    if args.oracle_rir:
        model_cfg = config.PRESETS[args.preset]() if not args.config else resolve_config(args)
        rir = read_wav(args.oracle_rir)
    else:
        args.input = args.reference
        model_cfg, est = _estimate(args, args.mode)
        rir = normalize_rir(est, model_cfg.signal)
    out = pipeline.acoustic_match(source, rir)
    write_wav(args.out, out)
    print(f"wrote {args.out}")
    return 0


def cmd_complete(args, cfg: RunConfig) -> int:
    model_cfg, _, dit = _load_diffusion(args.model)
    partial = read_wav(args.partial)
    n = model_cfg.signal.rir_samples
    samples = partial.samples
    if len(samples) < n:
        samples = np.pad(samples, (0, n - len(samples)))
    partial = Waveform(samples[:n], partial.sample_rate)
    out = pipeline.complete_rir(
        partial, dit, model_cfg, args.prompt_ms, steps=args.steps, seed=args.seed
    )
    write_wav(args.out, out)
    _print_params(out, model_cfg, "completed RIR")
    print(f"wrote {args.out}")
    return 0


def cmd_text2rir(args, cfg: RunConfig) -> int:
    model_cfg, dit, text_enc = _load_text(args.model)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rirs = pipeline.text_to_rirs(
        args.caption, dit, text_enc, model_cfg, args.n,
        steps=args.steps, guidance=args.guidance, seed=args.seed,
    )
    for i, r in enumerate(rirs):
        path = out_dir / f"rir_{i:02d}.wav"
        write_wav(path, normalize_rir(r, model_cfg.signal))
        _print_params(r, model_cfg, str(path))
    return 0


def _parse_model_specs(specs: list[str]) -> dict[str, tuple]:
    """name=path (fins/diffusion) or name=fins_path+diff_path@prompt_ms (hybrid)."""
    out = {}
    for spec in specs:
        if "=" not in spec:
            raise ConfigError(f"--models entries look like name=path, got {spec!r}")
        name, path = spec.split("=", 1)
        if "+" in path:
            pair, _, ms = path.partition("@")
            fins_path, diff_path = pair.split("+", 1)
            out[name] = ("hybrid", fins_path, diff_path, float(ms or 25.0))
        else:
            out[name] = ("auto", path)
    return out


def _build_estimators(specs: dict[str, tuple], eval_cfg: RunConfig, seed: int):
    estimators = {}
    for name, spec in specs.items():
        if spec[0] == "hybrid":
            _, fins_path, diff_path, ms = spec
            fins_cfg, fenc, fdec = _load_fins(fins_path)
            diff_cfg, denc, dit = _load_diffusion(diff_path)

            def est_h(ex, fenc=fenc, fdec=fdec, denc=denc, dit=dit, cfg=diff_cfg, ms=ms):
                waves = [ex["x_early"], ex["x_full"]]
                def pick(n):
                    return waves if n == 2 else [waves[1]]
                return pipeline.estimate_hybrid(
                    pick(fenc.cfg.in_channels), fenc, fdec, denc, dit, cfg, ms, seed=seed
                )

            estimators[name] = est_h
            continue
        cfg_b, groups = load_bundle(spec[1])
        if "fins" in groups:
            _, enc, dec = _load_fins(spec[1])

            def est_f(ex, enc=enc, dec=dec, cfg=cfg_b):
                waves = [ex["x_early"], ex["x_full"]]
                use = waves if enc.cfg.in_channels == 2 else [waves[1]]
                return pipeline.estimate_fins(use, enc, dec, cfg)

            estimators[name] = est_f
        else:
            _, enc, dit = _load_diffusion(spec[1])
            if enc is None:
                raise CheckpointError(f"{spec[1]}: unconditional bundle cannot estimate")

            def est_d(ex, enc=enc, dit=dit, cfg=cfg_b):
                waves = [ex["x_early"], ex["x_full"]]
                use = waves if enc.cfg.in_channels == 2 else [waves[1]]
                return pipeline.estimate_diffusion(use, enc, dit, cfg, seed=seed)

            estimators[name] = est_d
    return estimators


def cmd_eval(args, cfg: RunConfig) -> int:
    dirs = synthdata.example_dirs(args.data)
    for d in dirs:
        if not (d / "rir.wav").exists():
            raise SignalError(f"{d}: missing ground-truth rir.wav")
    estimators = _build_estimators(_parse_model_specs(args.models), cfg, args.seed)
    if args.oracle:
        estimators["oracle"] = lambda ex: ex["rir"]
    report = evalrep.evaluate(dirs, estimators, cfg)
    text = report.tsv()
    print(text, end="")
    if args.report:
        Path(args.report).write_text(text)
        print(f"wrote {args.report}")
    return 0


def cmd_export_dist(args, cfg: RunConfig) -> int:
    dirs = synthdata.example_dirs(args.data)
    estimators = _build_estimators(_parse_model_specs(args.models), cfg, args.seed)
    report = evalrep.evaluate(dirs, estimators, cfg)
    text = evalrep.export_dist(report)
    Path(args.out).write_text(text)
    print(f"wrote {args.out} ({len(text.splitlines()) - 1} rows)")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rirdiff",
        description="Blind room impulse response estimation and generation.",
    )
    parser.add_argument("--preset", choices=sorted(PRESETS), default="paper")
    parser.add_argument("--config", help=f"key=value config file (or ${config.CONFIG_ENV_VAR})")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override any config key, e.g. --set train.batch_size=8")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--captions", action="store_true",
                   help="balance the caption bins (for text fine-tuning data)")
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("train-fins", help="train a non-generative baseline")
    p.add_argument("--data", required=True)
    p.add_argument("--variant", choices=baseline.VARIANTS, default="layernorm_2ch")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.set_defaults(func=cmd_train_fins)

    p = sub.add_parser("train-diffusion", help="train the generative estimator")
    p.add_argument("--data", required=True)
    p.add_argument("--channels", type=int, choices=(1, 2), default=2)
    p.add_argument("--warm-init", default=None,
                   help="baseline bundle providing encoder weights")
    p.add_argument("--unconditional", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.set_defaults(func=cmd_train_diffusion)

    p = sub.add_parser("finetune-text", help="fine-tune for caption conditioning")
    p.add_argument("--data", required=True)
    p.add_argument("--init", required=True, help="trained diffusion bundle")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.set_defaults(func=cmd_finetune_text)

    def sampling_flags(p):
        p.add_argument("--steps", type=int, default=None)
        p.add_argument("--guidance", type=float, default=None)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("estimate", help="estimate an RIR from reverberant audio")
    p.add_argument("--input", required=True)
    p.add_argument("--early", default=None, help="extracted early-component wav")
    p.add_argument("--model", required=True)
    p.add_argument("--fins-model", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("diffusion", "fins", "hybrid"), default="diffusion")
    p.add_argument("--prompt-ms", type=float, default=25.0)
    sampling_flags(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("match", help="apply reference acoustics to new audio")
    p.add_argument("--reference", required=True)
    p.add_argument("--early", default=None)
    p.add_argument("--source", required=True)
    p.add_argument("--model", default=None)
    p.add_argument("--fins-model", default=None)
    p.add_argument("--oracle-rir", default=None, help="skip estimation, use this RIR")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("diffusion", "fins", "hybrid"), default="diffusion")
    p.add_argument("--prompt-ms", type=float, default=25.0)
    sampling_flags(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("complete", help="complete an RIR from its early part")
    p.add_argument("--partial", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--prompt-ms", type=float, required=True)
    p.add_argument("--out", required=True)
    sampling_flags(p)
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("text2rir", help="generate RIRs from a caption")
    p.add_argument("--caption", required=True)
    p.add_argument("-n", type=int, default=5)
    p.add_argument("--model", required=True)
    p.add_argument("--out-dir", required=True)
    sampling_flags(p)
    p.set_defaults(func=cmd_text2rir)

    p = sub.add_parser("eval", help="error tables against ground truth")
    p.add_argument("--data", required=True)
    p.add_argument("--models", nargs="+", required=True,
                   metavar="NAME=PATH | NAME=FINS+DIFF@MS")
    p.add_argument("--oracle", action="store_true", help="add a passthrough oracle")
    p.add_argument("--report", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-dist", help="export (t60, edt, drr) scatter data")
    p.add_argument("--data", required=True)
    p.add_argument("--models", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_export_dist)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return args.func(args, cfg) or 0
    except (ConfigError, ShapeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SignalError, acoustics.MetricError, CheckpointError, VocabularyError,
            FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, OptimError, TrainError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
