"""Command-line harness.

Subcommands: gen-data (synthetic corpus), train, eval (Table-style WER
report), flops (analytic cost report), dump-maps (gate heatmaps). Every
failure exits nonzero after printing a single `error: <reason>` line to
stderr so callers can parse outcomes mechanically.

`train` writes the resolved configuration to <out>/config.txt next to the
checkpoint; `eval` and `dump-maps` read that file to locate the corpus and
rebuild the architecture, so a checkpoint directory is self-describing.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .checkpoint import load_checkpoint, restore_into
from .config import RunConfig, load_corpus_spec, load_run_config
from .data import VOCABULARY, generate_corpus, load_split
from .flops import count_model
from .model import init_model_params
from .tensor import parameter
from .train import TrainingDivergence, evaluate, train_loop
from .visualize import collect_stage_maps, dump_stage_maps


def _config_beside(checkpoint: str) -> RunConfig:
    path = Path(checkpoint).parent / "config.txt"
    if not path.exists():
        raise FileNotFoundError(
            f"no config.txt next to {checkpoint}; expected the training output layout")
    return load_run_config(path)


def _restore_model(checkpoint: str, config: RunConfig):
    ckpt = load_checkpoint(checkpoint)
    classes = ckpt.params["head.classifier.bias"].shape[0] - 1
    if classes != len(VOCABULARY):
        raise ValueError(
            f"vocabulary mismatch: checkpoint classifies {classes} tokens, "
            f"corpus vocabulary has {len(VOCABULARY)}")
    params = init_model_params(config.model_config(), ckpt.seed)
    restore_into(params.flat(), ckpt.params)
    return params


def _cmd_gen_data(args) -> int:
    spec = load_corpus_spec(args.spec)
    generate_corpus(spec, args.out)
    for split, size in spec.split_sizes().items():
        print(f"wrote split={split} samples={size}")
    print(f"corpus_dir={args.out} seed={spec.seed}")
    return 0


def _cmd_train(args) -> int:
    config = load_run_config(args.config)
    result = train_loop(config, args.out, resume=args.resume)
    print(f"epochs_run={result.epochs_run} best_dev_wer={result.best_dev_wer:.4f} "
          f"checkpoint={result.checkpoint_path} "
          f"early_stop={'true' if result.stopped_early else 'false'}")
    return 0


def _cmd_eval(args) -> int:
    config = _config_beside(args.checkpoint)
    params = _restore_model(args.checkpoint, config)
    samples = load_split(config.data_dir, args.split)
    report = evaluate(params, config.model_config(), samples, args.split)
    print(report.as_table(VOCABULARY))
    return 0


def _cmd_flops(args) -> int:
    config = load_run_config(args.config)
    report = count_model(config.model_config(), config.flops_frames)
    print(report.as_text())
    print()
    print(report.as_keyvalues())
    return 0


def _cmd_dump_maps(args) -> int:
    config = _config_beside(args.checkpoint)
    params = _restore_model(args.checkpoint, config)
    samples = load_split(config.data_dir, "dev")
    if not 0 <= args.sample < len(samples):
        raise ValueError(
            f"sample index {args.sample} out of range for dev split of {len(samples)}")
    video = parameter(samples[args.sample].frames)
    maps = collect_stage_maps(video, config.model_config(), params)
    written = dump_stage_maps(maps, args.out)
    print(f"sample={samples[args.sample].sample_id} files={len(written)} out={args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stcorr",
        description="Spatial-temporal correlation pipeline: data, training, reports.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic trajectory corpus")
    p.add_argument("--spec", required=True, help="corpus spec file (key=value)")
    p.add_argument("--out", required=True, help="corpus output directory")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train a model and write checkpoint + metrics log")
    p.add_argument("--config", required=True, help="run config file (key=value)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="report WER with edit decomposition on a split")
    p.add_argument("--checkpoint", required=True, help="trained checkpoint file")
    p.add_argument("--split", required=True, choices=("train", "dev", "test"))
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("flops", help="analytic multiply-add report for a config")
    p.add_argument("--config", required=True, help="run config file (key=value)")
    p.set_defaults(func=_cmd_flops)

    p = sub.add_parser("dump-maps", help="export gate heatmaps for one dev sample")
    p.add_argument("--checkpoint", required=True, help="trained checkpoint file")
    p.add_argument("--sample", required=True, type=int, help="dev sample index")
    p.add_argument("--out", required=True, help="image output directory")
    p.set_defaults(func=_cmd_dump_maps)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TrainingDivergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # every failure mode gets one parseable line
        reason = str(exc).replace("\n", " ") or type(exc).__name__
        print(f"error: {reason}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
