"""Command-line entry points: synth, preprocess, pretrain, extract, evaluate.

Configuration comes from a plain `key = value` text file; command-line flags
override file values. Every command writes a run_manifest.json next to its
outputs (the manifest is the only output carrying wall time, so everything
else is byte-identical across reruns with the same seed).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint
from .downstream import (
    Trial,
    TrialFeatures,
    extract_features,
    fourier_features,
    loso_from_features,
    per_channel_csv_lines,
    per_channel_evaluate,
    trial_from_recording,
)
from .dsp import PreprocessConfig, preprocess_channel
from .encoder import EncoderConfig, init_encoder_weights, toy_config
from .errors import EmptyInput, SinglemError
from .io import (
    BandComponent,
    ChannelSignal,
    Recording,
    SyntheticSpec,
    generate_synthetic,
    read_container,
    subject_spec,
    trial_spec,
    write_container,
)
from .pretrain import (
    PretrainConfig,
    history_csv_lines,
    init_decoder_weights,
    train,
)
from .tokenizer import TokenizerParams, build_stream


class ConfigError(SinglemError):
    code = "E_CONFIG"


# -- config handling ----------------------------------------------------------


def parse_config_file(path: str | Path) -> dict[str, str]:
    cfg: dict[str, str] = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"bad config line: {raw!r}")
        key, value = line.split("=", 1)
        cfg[key.strip()] = value.strip()
    return cfg


def cfg_get(cfg: dict[str, str], key: str, default=None, required=False) -> str:
    if key in cfg:
        return cfg[key]
    if required:
        raise ConfigError(f"missing config key {key!r}")
    return default


def cfg_int(cfg, key, default=None, required=False) -> int | None:
    v = cfg_get(cfg, key, None, required)
    return int(v) if v is not None else default


def cfg_float(cfg, key, default=None, required=False) -> float | None:
    v = cfg_get(cfg, key, None, required)
    return float(v) if v is not None else default


def cfg_bool(cfg, key, default=False) -> bool:
    v = cfg_get(cfg, key)
    if v is None:
        return default
    return v.lower() in ("1", "true", "yes", "on")


def parse_components(text: str) -> tuple[BandComponent, ...]:
    """'10:30:1.5|0.5, 25:20:0.5|1.5' -> components with per-class gains."""
    comps = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split(":")
        if len(parts) != 3:
            raise ConfigError(f"bad component {chunk!r}, want freq:amp:g0|g1|...")
        gains = tuple(float(g) for g in parts[2].split("|"))
        comps.append(BandComponent(float(parts[0]), float(parts[1]), gains))
    if not comps:
        raise ConfigError("components list is empty")
    return tuple(comps)


def write_manifest(out_dir: Path, command: str, config: dict[str, str],
                   seed, inputs: list[str], outputs: list[str],
                   started: float) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
        "wall_time_s": round(time.time() - started, 3),
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "run_manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _find_containers(root: Path) -> list[Path]:
    if root.is_file():
        return [root]
    return sorted(root.glob("*.sgh"))


# -- feature CSV --------------------------------------------------------------


def features_to_csv_lines(features: list[TrialFeatures]) -> list[str]:
    slices = features[0].channel_slices
    slice_txt = ";".join(f"{n}:{a}:{b}" for n, (a, b) in slices.items())
    width = features[0].vector.size
    lines = [f"# channel_slices={slice_txt}",
             "subject,label," + ",".join(f"f{i}" for i in range(width))]
    for f in features:
        values = ",".join(repr(v) for v in f.vector.tolist())
        lines.append(f"{f.subject_id},{f.label},{values}")
    return lines


def features_from_csv_lines(lines: list[str]) -> list[TrialFeatures]:
    slices: dict[str, tuple[int, int]] = {}
    rows: list[TrialFeatures] = []
    for line in lines:
        line = line.strip()
        if not line:
            continue
        if line.startswith("# channel_slices="):
            for item in line.split("=", 1)[1].split(";"):
                name, a, b = item.split(":")
                slices[name] = (int(a), int(b))
            continue
        if line.startswith("subject,"):
            continue
        parts = line.split(",")
        rows.append(TrialFeatures(
            subject_id=parts[0], label=int(parts[1]),
            vector=np.array([float(v) for v in parts[2:]]),
            channel_slices=dict(slices)))
    if not rows:
        raise EmptyInput("feature CSV contains no rows")
    return rows


# -- encoder config from key-value dicts ---------------------------------------


def encoder_config_from(cfg: dict[str, str]) -> EncoderConfig:
    base = toy_config() if cfg_get(cfg, "preset", "default") == "toy" \
        else EncoderConfig()
    overrides = {}
    for field_name in ("token_len", "embed_dim", "window", "embed_layers",
                       "embed_heads", "bottleneck_dim", "model_dim",
                       "global_layers", "global_heads", "repr_dim",
                       "max_seq_len"):
        v = cfg_int(cfg, field_name)
        if v is not None:
            overrides[field_name] = v
    for field_name in ("conv_kernels", "conv_channels"):
        v = cfg_get(cfg, field_name)
        if v is not None:
            overrides[field_name] = tuple(int(s) for s in v.split(","))
    return replace(base, **overrides)


def tokenizer_params_from(cfg: dict[str, str],
                          enc: EncoderConfig) -> TokenizerParams:
    return TokenizerParams(
        token_len=enc.token_len,
        overlap=cfg_int(cfg, "overlap", 32 if enc.token_len == 128 else
                        max(1, enc.token_len // 4)))


# -- commands ------------------------------------------------------------------


def cmd_synth(args, cfg: dict[str, str]) -> None:
    started = time.time()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else cfg_int(cfg, "seed", required=True)
    mode = cfg_get(cfg, "mode", required=True)
    names = cfg_get(cfg, "channel_names")
    informative = cfg_get(cfg, "informative_channels")
    spec = SyntheticSpec(
        n_subjects=cfg_int(cfg, "n_subjects", required=True),
        n_channels=cfg_int(cfg, "n_channels", required=True),
        duration_s=cfg_float(cfg, "duration_s", required=True),
        band_components=parse_components(cfg_get(cfg, "components", required=True)),
        noise_std_uv=cfg_float(cfg, "noise_std_uv", 5.0),
        seed=seed,
        sampling_rate_hz=cfg_float(cfg, "rate", 128.0),
        channel_names=tuple(names.split(",")) if names else None,
        informative_channels=tuple(informative.split(",")) if informative else None,
    )
    n_classes = cfg_int(cfg, "classes", required=True)
    outputs = []
    if mode == "corpus":
        for s in range(spec.n_subjects):
            sub = subject_spec(spec, s)
            for cls in range(n_classes):
                rec = generate_synthetic(sub, cls)
                path = out_dir / f"{sub.subject_id}_c{cls}"
                write_container(rec, path)
                outputs.append(path.name)
    elif mode == "trials":
        per_class = cfg_int(cfg, "trials_per_class", required=True)
        for s in range(spec.n_subjects):
            for cls in range(n_classes):
                for t in range(per_class):
                    tspec = trial_spec(spec, s, cls * per_class + t)
                    rec = generate_synthetic(tspec, cls)
                    path = out_dir / f"{tspec.subject_id}_c{cls}_t{t:03d}"
                    write_container(rec, path)
                    outputs.append(path.name)
    else:
        raise ConfigError(f"mode must be corpus or trials, got {mode!r}")
    write_manifest(out_dir, "synth", cfg, seed, [], outputs, started)
    print(f"synth: wrote {len(outputs)} containers to {out_dir}")


def cmd_preprocess(args, cfg: dict[str, str]) -> None:
    started = time.time()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    pp = PreprocessConfig(
        band=(cfg_float(cfg, "band_low", 0.5), cfg_float(cfg, "band_high", 50.0)),
        notch_hz=float(args.notch) if args.notch else cfg_float(cfg, "notch", 50.0),
        target_rate_hz=cfg_float(cfg, "target_rate", 128.0),
        reject_threshold_uv=cfg_float(cfg, "reject_threshold_uv", 100.0),
        scale_factor=cfg_float(cfg, "scale_factor", 1e4),
        reject_enabled=cfg_bool(cfg, "reject", True),
        num_taps=cfg_int(cfg, "num_taps", 513),
    )
    inputs = []
    outputs = []
    for in_path in args.inputs:
        for container in _find_containers(Path(in_path)):
            rec = read_container(container)
            inputs.append(str(container))
            per_channel = []
            for ch in rec.channels:
                try:
                    segments = preprocess_channel(ch.samples,
                                                  rec.sampling_rate_hz, pp)
                except SinglemError as exc:
                    raise type(exc)(
                        f"{container.name}/{ch.name}: {exc}") from exc
                per_channel.append((ch.name, segments))
            if pp.reject_enabled:
                # rejection cuts channels independently, so each clean
                # segment becomes its own single-channel container
                for ch_name, segments in per_channel:
                    for k, seg in enumerate(segments):
                        out_rec = Recording(
                            subject_id=rec.subject_id,
                            channels=[ChannelSignal(ch_name, seg, scaled=True)],
                            sampling_rate_hz=pp.target_rate_hz,
                            label=rec.label)
                        name = f"{container.stem}__{ch_name}__s{k:02d}"
                        write_container(out_rec, out_dir / name)
                        outputs.append(name)
            else:
                # no rejection: channel lengths stay equal, keep the
                # multi-channel structure (the trial path relies on it)
                out_rec = Recording(
                    subject_id=rec.subject_id,
                    channels=[ChannelSignal(name, segs[0], scaled=True)
                              for name, segs in per_channel],
                    sampling_rate_hz=pp.target_rate_hz,
                    label=rec.label)
                name = f"{container.stem}__pp"
                write_container(out_rec, out_dir / name)
                outputs.append(name)
    write_manifest(out_dir, "preprocess", cfg, args.seed, inputs, outputs, started)
    print(f"preprocess: wrote {len(outputs)} containers to {out_dir}")


def cmd_pretrain(args, cfg: dict[str, str]) -> None:
    started = time.time()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else cfg_int(cfg, "seed", required=True)

    resume = None
    if args.resume:
        resume = load_checkpoint(args.resume)
        enc_cfg = EncoderConfig.from_flat_dict(resume.config)
        tok = TokenizerParams(token_len=enc_cfg.token_len,
                              overlap=int(resume.config["overlap"]))
    else:
        enc_cfg = encoder_config_from(cfg)
        if args.max_seq_len is not None:
            enc_cfg = replace(enc_cfg, max_seq_len=args.max_seq_len)
        tok = tokenizer_params_from(cfg, enc_cfg)

    seq_hi_default = min(32, enc_cfg.max_seq_len)
    pcfg = PretrainConfig(
        lambda_masked=cfg_float(cfg, "lambda_masked", 1.0),
        lambda_unmasked=cfg_float(cfg, "lambda_unmasked", 1.0),
        lambda_band=cfg_float(cfg, "lambda_band", 0.1),
        huber_delta=cfg_float(cfg, "huber_delta", 1.0),
        mask_p=cfg_float(cfg, "mask_p", 0.5),
        batch_size=cfg_int(cfg, "batch_size", 64),
        epochs=cfg_int(cfg, "epochs", 16),
        seq_len_range=(cfg_int(cfg, "seq_len_min", 8),
                       cfg_int(cfg, "seq_len_max", seq_hi_default)),
        lr_max=cfg_float(cfg, "lr_max", 1e-4),
        lr_min=cfg_float(cfg, "lr_min", 1e-6),
        weight_decay=cfg_float(cfg, "weight_decay", 0.1),
        seed=seed,
        max_steps=cfg_int(cfg, "max_steps"),
        checkpoint_every=cfg_int(cfg, "checkpoint_every"),
    )

    segments = []
    containers = _find_containers(Path(args.corpus))
    if not containers:
        raise EmptyInput(f"no containers found in {args.corpus}")
    for container in containers:
        rec = read_container(container)
        for ch in rec.channels:
            segments.append(ch.samples)
    stream = build_stream(segments, tok)

    if resume is not None:
        params = resume.params
        opt_state = resume.opt_state
        start_step = opt_state.step if opt_state else 0
    else:
        params = init_encoder_weights(enc_cfg, seed)
        params.update(init_decoder_weights(enc_cfg, [seed, 1]))
        opt_state = None
        start_step = 0

    echo = enc_cfg.as_flat_dict()
    echo["overlap"] = str(tok.overlap)
    echo["seed"] = str(seed)
    ckpt_path = out_dir / "model"
    result = train(stream, params, enc_cfg, pcfg, opt_state=opt_state,
                   start_step=start_step,
                   stop_after=cfg_int(cfg, "stop_after"),
                   checkpoint_path=ckpt_path, config_echo=echo)
    csv_path = out_dir / "loss_history.csv"
    mode = "a" if args.resume and csv_path.exists() else "w"
    with open(csv_path, mode, encoding="utf-8") as fh:
        lines = history_csv_lines(result.history)
        if mode == "a":
            lines = lines[1:]
        fh.write("\n".join(lines) + "\n")
    write_manifest(out_dir, "pretrain", cfg, seed,
                   [str(c) for c in containers],
                   ["model.ckpt", "model.ckpb", "loss_history.csv"], started)
    print(f"pretrain: {len(result.history)} steps, checkpoint at {ckpt_path}.ckpt")


def _load_trials(trials_dir: str) -> list[Trial]:
    containers = _find_containers(Path(trials_dir))
    if not containers:
        raise EmptyInput(f"no trial containers found in {trials_dir}")
    return [trial_from_recording(read_container(c)) for c in containers]


def _parse_fourier(value: str) -> int:
    text = value.strip()
    if text.startswith("k="):
        text = text[2:]
    return int(text)


def _features_for(args, trials: list[Trial]):
    if args.fourier is not None:
        k = _parse_fourier(args.fourier)
        return [fourier_features(t, k) for t in trials], None, None, None
    if not args.checkpoint:
        raise ConfigError("need --checkpoint for encoder features "
                          "(or --fourier k=N for the baseline)")
    ckpt = load_checkpoint(args.checkpoint)
    enc_cfg = EncoderConfig.from_flat_dict(ckpt.config)
    tok = TokenizerParams(token_len=enc_cfg.token_len,
                          overlap=int(ckpt.config["overlap"]))
    feats = [extract_features(t, ckpt.params, enc_cfg, tok) for t in trials]
    return feats, ckpt.params, enc_cfg, tok


def cmd_extract(args, cfg: dict[str, str]) -> None:
    started = time.time()
    trials = _load_trials(args.trials)
    feats, _, _, _ = _features_for(args, trials)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text("\n".join(features_to_csv_lines(feats)) + "\n",
                        encoding="utf-8")
    write_manifest(out_path.parent, "extract", cfg, args.seed,
                   [args.trials], [out_path.name], started)
    print(f"extract: {len(feats)} feature rows of width "
          f"{feats[0].vector.size} -> {out_path}")


def cmd_evaluate(args, cfg: dict[str, str]) -> None:
    started = time.time()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else cfg_int(cfg, "seed", 0)

    params = enc_cfg = tok = None
    if args.features:
        feats = features_from_csv_lines(
            Path(args.features).read_text(encoding="utf-8").splitlines())
        trials = None
    else:
        if not args.trials or (not args.checkpoint and args.fourier is None):
            raise ConfigError("evaluate needs --features or --trials with "
                              "--checkpoint/--fourier")
        trials = _load_trials(args.trials)
        feats, params, enc_cfg, tok = _features_for(args, trials)

    report = loso_from_features(feats, seed=seed)
    (out_dir / "report.csv").write_text(
        "\n".join(report.csv_lines()) + "\n", encoding="utf-8")
    (out_dir / "summary.txt").write_text(report.summary_text(), encoding="utf-8")
    outputs = ["report.csv", "summary.txt"]

    if args.per_channel:
        if trials is None or params is None:
            raise ConfigError("--per-channel needs --trials and --checkpoint")
        results = per_channel_evaluate(trials, params, enc_cfg, tok, seed=seed)
        (out_dir / "per_channel.csv").write_text(
            "\n".join(per_channel_csv_lines(results)) + "\n", encoding="utf-8")
        outputs.append("per_channel.csv")

    write_manifest(out_dir, "evaluate", cfg, seed,
                   [args.features or args.trials], outputs, started)
    mean_acc, std_acc = report.mean_std("accuracy")
    print(f"evaluate: {len(report.folds)} folds, "
          f"accuracy {mean_acc:.4f} +/- {std_acc:.4f}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="singlem",
        description="Single-channel EEG pretraining and evaluation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", required=True, help="output file or directory")

    p = sub.add_parser("synth", help="generate a synthetic corpus or trial set")
    common(p)

    p = sub.add_parser("preprocess", help="filter/resample/reject/scale containers")
    common(p)
    p.add_argument("inputs", nargs="+", help="container files or directories")
    p.add_argument("--notch", choices=["50", "60"], default=None)

    p = sub.add_parser("pretrain", help="masked-autoencoder pretraining")
    common(p)
    p.add_argument("--corpus", required=True, help="directory of containers")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--max-seq-len", type=int, default=None)

    p = sub.add_parser("extract", help="frozen features from trial containers")
    common(p)
    p.add_argument("--trials", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--fourier", metavar="k=N", default=None)

    p = sub.add_parser("evaluate", help="leave-one-subject-out evaluation")
    common(p)
    p.add_argument("--features", help="feature CSV from extract")
    p.add_argument("--trials")
    p.add_argument("--checkpoint")
    p.add_argument("--fourier", metavar="k=N", default=None)
    p.add_argument("--per-channel", action="store_true")
    return parser


HANDLERS = {
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "pretrain": cmd_pretrain,
    "extract": cmd_extract,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = parse_config_file(args.config) if args.config else {}
    try:
        HANDLERS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 2
    except SinglemError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
