"""Command-line surface.

Subcommands mirror the pipeline stages: featurize audio, generate the
synthetic paired dataset, run the two training stages, evaluate, and dump the
codebook. Every config key is also a `--key value` flag with precedence
command line > config file > defaults. Exit codes: 0 success, 1 usage or
config error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import io as ivf_io
from . import synth, training
from .config import SCHEMA, RunConfig, load_config_file, resolve
from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    InvalidInputError,
    NumericError,
)
from .features import FEATURE_RECIPES, extract

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="path to a key = value config file")
    parser.add_argument("--seed", type=int, help="shorthand for --train.seed")
    for key, field in SCHEMA.items():
        parser.add_argument(
            f"--{key}", dest=_dest(key), metavar="VALUE", help=field.help
        )


def _dest(key: str) -> str:
    return "cfgkey__" + key.replace(".", "__")


def _resolve_config(args) -> RunConfig:
    file_values = load_config_file(args.config) if args.config else {}
    cli_values = {}
    for key in SCHEMA:
        text = getattr(args, _dest(key), None)
        if text is not None:
            cli_values[key] = text
    if args.seed is not None:
        cli_values["train.seed"] = str(args.seed)
    return resolve(file_values, cli_values)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ivfnet",
        description="Acoustic scene classification via imagined visual features.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("featurize", help="extract spectral features from WAV files")
    p.add_argument("--input", required=True, help="WAV file or directory of WAVs")
    p.add_argument("--kind", required=True, choices=FEATURE_RECIPES)
    p.add_argument("--out", required=True, help="output directory for .ivf files")
    _add_common(p)

    p = sub.add_parser("gen-synthetic", help="render the synthetic paired dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    _add_common(p)

    p = sub.add_parser("train-av", help="stage A: autoencoder + transformation net")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--loss-csv", help="loss history CSV path")
    _add_common(p)

    p = sub.add_parser("train-classifier", help="stage B: scene classifier")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--ckpt", required=True, help="stage-A checkpoint")
    p.add_argument("--out", required=True, help="stage-B checkpoint path")
    p.add_argument("--loss-csv", help="loss history CSV path")
    p.add_argument("--shuffle-labels", action="store_true",
                   help="control run: train on label-shuffled data")
    _add_common(p)

    p = sub.add_parser("eval", help="evaluate a stage-B checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--split", default="seen",
                   choices=("seen", "unseen", "train", "val"))
    p.add_argument("--confusion-csv", help="where to write the confusion matrix")
    _add_common(p)

    p = sub.add_parser("inspect-codebook", help="dump prototypes as CSV")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True, help="CSV path (K rows, d columns)")
    _add_common(p)
    return parser


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_featurize(args) -> int:
    cfg = _resolve_config(args)
    fcfg = cfg.feature_config()
    in_path = Path(args.input)
    out_dir = Path(args.out)
    if in_path.is_dir():
        wavs = sorted(in_path.glob("*.wav"))
    elif in_path.exists():
        wavs = [in_path]
    else:
        raise DataError(f"{in_path}: no such file or directory")
    out_dir.mkdir(parents=True, exist_ok=True)
    if not wavs:
        print(f"warning: no WAV files found in {in_path}")
        return EXIT_OK
    for wav in wavs:
        fm = extract(ivf_io.read_wav(wav), args.kind, fcfg)
        ivf_io.write_features(out_dir / (wav.stem + ".ivf"), fm)
    print(f"featurized {len(wavs)} clip(s) -> {out_dir}")
    return EXIT_OK


def _scene_spec(cfg: RunConfig) -> synth.SyntheticSceneSpec:
    return synth.SyntheticSceneSpec(
        n_classes=cfg["model.n_classes"],
        sample_rate=cfg["audio.sample_rate"],
        clip_seconds=cfg["synth.clip_seconds"],
        snr_db=cfg["synth.snr_db"],
        image_size=cfg["model.image_size"],
    )


def cmd_gen_synthetic(args) -> int:
    cfg = _resolve_config(args)
    spec = _scene_spec(cfg)
    sizes = {
        "train": cfg["synth.train_count"],
        "val": cfg["synth.val_count"],
        "test_seen": cfg["synth.test_count"],
        "test_unseen": cfg["synth.test_count"],
    }
    synth.render_dataset(
        spec,
        args.out,
        seed=cfg["train.seed"],
        split_sizes=sizes,
        unseen_snr_db=cfg["synth.unseen_snr_db"],
        unseen_detune=cfg["synth.unseen_detune"],
    )
    total = sum(sizes.values())
    print(f"rendered {total} clips across {len(sizes)} splits -> {args.out}")
    return EXIT_OK


def cmd_train_av(args) -> int:
    cfg = _resolve_config(args)
    pairs = synth.load_split(
        args.data, "train", cfg.feature_config(), cfg["audio.recipe"], with_images=True
    )
    bundle = training.train_stage_a(
        pairs,
        cfg.model_config(),
        cfg.train_config(),
        cfg.gan_config(),
        loss_csv=args.loss_csv,
        ckpt_path=args.out,
        quiet=False,
    )
    print(f"stage A finished at step {bundle.step_a}; checkpoint -> {args.out}")
    return EXIT_OK


def _check_echo_compat(cfg: RunConfig, meta: dict, ckpt_path) -> None:
    """Explicitly-set model/audio keys must agree with the checkpoint echo."""
    echo = meta.get("config", {}).get("model", {})
    for key in cfg.explicit:
        section, _, name = key.partition(".")
        if section != "model" or name not in echo:
            continue
        current = cfg[key]
        recorded = echo[name]
        recorded = tuple(recorded) if isinstance(recorded, list) else recorded
        if current != recorded:
            raise CheckpointError(
                f"{ckpt_path}: config mismatch on {key}: checkpoint has "
                f"{recorded!r}, requested {current!r}"
            )


def cmd_train_classifier(args) -> int:
    cfg = _resolve_config(args)
    bundle, meta = training.load_bundle(args.ckpt)
    _check_echo_compat(cfg, meta, args.ckpt)
    fcfg = cfg.feature_config()
    recipe = cfg["audio.recipe"]
    train_pairs = synth.load_split(args.data, "train", fcfg, recipe)
    val_pairs = synth.load_split(args.data, "val", fcfg, recipe)
    bundle = training.train_stage_b(
        train_pairs,
        bundle,
        cfg.train_config(),
        heldout_pairs=val_pairs,
        shuffle_labels=args.shuffle_labels,
        loss_csv=args.loss_csv,
        ckpt_path=args.out,
        quiet=False,
    )
    result = training.evaluate(bundle, val_pairs, "val")
    print(f"stage B finished at step {bundle.step_b}; val accuracy {result.accuracy:.3f}")
    print(f"checkpoint -> {args.out}")
    return EXIT_OK


_SPLIT_DIRS = {"seen": "test_seen", "unseen": "test_unseen", "train": "train", "val": "val"}


def cmd_eval(args) -> int:
    cfg = _resolve_config(args)
    bundle, meta = training.load_bundle(args.ckpt)
    _check_echo_compat(cfg, meta, args.ckpt)
    split_dir = _SPLIT_DIRS[args.split]
    pairs = synth.load_split(args.data, split_dir, cfg.feature_config(), cfg["audio.recipe"])
    result = training.evaluate(bundle, pairs, args.split)
    out_csv = args.confusion_csv or str(Path(args.ckpt).with_suffix("")) + f".confusion_{args.split}.csv"
    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"pred_{i}" for i in range(result.confusion.shape[1])])
        writer.writerows(result.confusion.tolist())
    print(f"split {args.split}: accuracy {result.accuracy:.3f} over {len(pairs)} clips")
    print(f"confusion matrix -> {out_csv}")
    return EXIT_OK


def cmd_inspect_codebook(args) -> int:
    _resolve_config(args)
    bundle, _ = training.load_bundle(args.ckpt)
    protos = bundle.codebook.prototypes.data
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerows([format(x, ".9g") for x in row] for row in protos)
    print(f"wrote {protos.shape[0]} prototypes of dim {protos.shape[1]} -> {args.out}")
    return EXIT_OK


_COMMANDS = {
    "featurize": cmd_featurize,
    "gen-synthetic": cmd_gen_synthetic,
    "train-av": cmd_train_av,
    "train-classifier": cmd_train_classifier,
    "eval": cmd_eval,
    "inspect-codebook": cmd_inspect_codebook,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
