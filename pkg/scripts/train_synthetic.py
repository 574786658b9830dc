#!/usr/bin/env python3
"""End-to-end experiment: corpus generation, training, and held-out scoring.

Generates the synthetic trajectory corpus (skipped if the directory already
holds one), trains the gated model and optionally the plain baseline on the
same budget, then reports dev and test WER for each run. Expect roughly 15
minutes per model on one core at the default sizes.
"""

import argparse
import dataclasses
import pathlib

from stcorr.checkpoint import load_checkpoint, restore_into
from stcorr.config import CorpusSpec, RunConfig
from stcorr.data import generate_corpus, load_split
from stcorr.model import init_model_params
from stcorr.train import evaluate, train_loop


def ensure_corpus(data_dir: pathlib.Path, spec: CorpusSpec) -> None:
    if (data_dir / "train" / "labels.txt").exists():
        print(f"corpus: reusing {data_dir}")
        return
    generate_corpus(spec, data_dir)
    for split, n in spec.split_sizes().items():
        print(f"corpus: wrote split={split} samples={n}")


def score(run_dir: pathlib.Path, config: RunConfig, split: str) -> str:
    ckpt = load_checkpoint(run_dir / "best.ckpt")
    params = init_model_params(config.model_config(), ckpt.seed)
    restore_into(params.flat(), ckpt.params)
    samples = load_split(pathlib.Path(config.data_dir), split)
    report = evaluate(params, config.model_config(), samples, split=split)
    return report.summary_line()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=pathlib.Path, default=pathlib.Path("runs"))
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--stop-wer", type=float, default=5.0)
    parser.add_argument("--train", type=int, default=400)
    parser.add_argument("--dev", type=int, default=50)
    parser.add_argument("--test", type=int, default=50)
    parser.add_argument("--skip-baseline", action="store_true")
    args = parser.parse_args(argv)

    data_dir = args.out / "data"
    ensure_corpus(data_dir, CorpusSpec(
        train=args.train, dev=args.dev, test=args.test, seed=args.seed))

    full_config = RunConfig(
        data_dir=str(data_dir), seed=args.seed,
        epochs=args.epochs, stop_wer=args.stop_wer)
    full = train_loop(full_config, args.out / "full")
    print(f"full: epochs_run={full.epochs_run} best_dev_wer={full.best_dev_wer:.4f}")

    runs = [("full", full_config)]
    if not args.skip_baseline:
        # Match the gated model's realized budget so the comparison is
        # epoch-for-epoch, and disable early stopping for the reference run.
        baseline_config = dataclasses.replace(
            full_config, with_st_stages=False,
            epochs=full.epochs_run, stop_wer=None)
        baseline = train_loop(baseline_config, args.out / "baseline")
        print(f"baseline: epochs_run={baseline.epochs_run} "
              f"best_dev_wer={baseline.best_dev_wer:.4f}")
        runs.append(("baseline", baseline_config))

    for name, config in runs:
        for split in ("dev", "test"):
            if getattr(args, split) > 0:
                print(f"{name}: {score(args.out / name, config, split)}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
