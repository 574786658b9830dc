"""Training and evaluation drivers: Adam on mean CTC loss, fully seeded.

Every source of randomness is a named child stream of the master seed
(parameter init, per-epoch shuffles), so a (config, seed) pair reproduces the
metrics log byte for byte. Checkpoints carry the optimizer moments and step
counter; resuming from one replays the remaining epochs exactly as the
uninterrupted run would have.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as tt
from .checkpoint import load_checkpoint, restore_into, save_checkpoint
from .config import RunConfig
from .ctc import ctc_loss, greedy_decode
from .data import load_split
from .metrics import wer
from .model import ModelConfig, ModelParams, init_model_params, model_forward
from .seeding import derive_seed
from .tensor import GradTape, parameter


class TrainingDivergence(RuntimeError):
    """Non-finite loss or activations; carries the offending step and epoch."""

    def __init__(self, step: int, epoch: int, detail: str):
        super().__init__(f"divergence at step {step} (epoch {epoch}): {detail}")
        self.step = step
        self.epoch = epoch


@dataclass
class Adam:
    """Adaptive moments with bias correction; float32 state throughout."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    moment1: dict = field(default_factory=dict)
    moment2: dict = field(default_factory=dict)

    def apply(self, params: dict, grads: dict) -> None:
        self.step_count += 1
        correction1 = 1.0 - self.beta1 ** self.step_count
        correction2 = 1.0 - self.beta2 ** self.step_count
        for name, p in params.items():
            g = grads[name].data
            m = self.moment1.get(name)
            if m is None:
                m = self.moment1[name] = np.zeros_like(p.data)
            v = self.moment2.get(name)
            if v is None:
                v = self.moment2[name] = np.zeros_like(p.data)
            m[...] = self.beta1 * m + (1.0 - self.beta1) * g
            v[...] = self.beta2 * v + (1.0 - self.beta2) * (g * g)
            p.data[...] -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


def train_step(params: ModelParams, flat: dict, model_config: ModelConfig,
               batch, optimizer: Adam) -> float:
    """One optimizer step on the mean CTC loss over the batch."""
    tape = GradTape(flat)
    total = None
    for sample in batch:
        logits = model_forward(parameter(sample.frames), model_config, params)
        loss = ctc_loss(logits, sample.tokens)
        total = loss if total is None else total + loss
    mean = total / float(len(batch))
    loss_value = float(mean.data)
    if not math.isfinite(loss_value):
        raise FloatingPointError(f"non-finite batch loss {loss_value}")
    optimizer.apply(flat, tape.backward(mean))
    return loss_value


@dataclass(frozen=True)
class SampleEval:
    sample_id: str
    reference: tuple
    hypothesis: tuple
    substitutions: int
    insertions: int
    deletions: int

    @property
    def wer(self) -> float:
        return (self.substitutions + self.insertions + self.deletions) / len(self.reference)


@dataclass(frozen=True)
class EvalReport:
    split: str
    rows: tuple

    @property
    def substitutions(self) -> int:
        return sum(r.substitutions for r in self.rows)

    @property
    def insertions(self) -> int:
        return sum(r.insertions for r in self.rows)

    @property
    def deletions(self) -> int:
        return sum(r.deletions for r in self.rows)

    @property
    def reference_tokens(self) -> int:
        return sum(len(r.reference) for r in self.rows)

    @property
    def wer_percent(self) -> float:
        errors = self.substitutions + self.insertions + self.deletions
        return 100.0 * errors / self.reference_tokens

    def summary_line(self) -> str:
        return (f"split={self.split} samples={len(self.rows)} "
                f"sub={self.substitutions} ins={self.insertions} del={self.deletions} "
                f"ref_tokens={self.reference_tokens} wer={self.wer_percent:.2f}")

    def as_table(self, vocabulary: dict | None = None) -> str:
        def render(tokens):
            if vocabulary:
                return " ".join(vocabulary.get(t, str(t)) for t in tokens)
            return " ".join(str(t) for t in tokens)

        lines = [f"{'sample':<12} {'ref':>4} {'sub':>4} {'ins':>4} {'del':>4} "
                 f"{'wer%':>7}  hypothesis"]
        for r in self.rows:
            lines.append(
                f"{r.sample_id:<12} {len(r.reference):>4} {r.substitutions:>4} "
                f"{r.insertions:>4} {r.deletions:>4} {100.0 * r.wer:>7.2f}  "
                f"{render(r.hypothesis)}")
        lines.append(self.summary_line())
        return "\n".join(lines)


def evaluate(params: ModelParams, model_config: ModelConfig, samples,
             split: str) -> EvalReport:
    """Greedy-decode every sample; corpus WER pools edit counts, not rates."""
    rows = []
    for sample in samples:
        with tt.no_grad():
            logits = model_forward(parameter(sample.frames), model_config, params)
        hypothesis = greedy_decode(logits).tokens
        breakdown = wer(hypothesis, sample.tokens)
        rows.append(SampleEval(
            sample_id=sample.sample_id,
            reference=sample.tokens,
            hypothesis=hypothesis,
            substitutions=breakdown.substitutions,
            insertions=breakdown.insertions,
            deletions=breakdown.deletions,
        ))
    return EvalReport(split=split, rows=tuple(rows))


def _scan_best_wer(log_path: Path) -> float:
    """Recover the best dev WER from an existing metrics log (for resume)."""
    best = math.inf
    if log_path.exists():
        for line in log_path.read_text(encoding="utf-8").splitlines():
            for part in line.split():
                if part.startswith("dev_wer="):
                    best = min(best, float(part.split("=", 1)[1]))
    return best


@dataclass(frozen=True)
class TrainResult:
    epochs_run: int
    best_dev_wer: float
    checkpoint_path: Path
    stopped_early: bool


def train_loop(config: RunConfig, out_dir, resume=None) -> TrainResult:
    """Train per config, logging one key=value line per epoch to metrics.log.

    Writes the resolved config to <out>/config.txt and the best-dev
    checkpoint (parameters, step, seed, Adam moments) to <out>/best.ckpt.
    `resume` replays the remaining epochs of an interrupted run from its
    checkpoint; the combined metrics log matches the uninterrupted run's.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(config.lines(), encoding="utf-8")

    model_config = config.model_config()
    train_samples = load_split(config.data_dir, "train")
    dev_samples = load_split(config.data_dir, "dev")
    if not train_samples or not dev_samples:
        raise ValueError(f"empty train or dev split under {config.data_dir}")

    params = init_model_params(model_config, config.seed)
    flat = params.flat()
    optimizer = Adam(lr=config.lr)
    steps_per_epoch = (len(train_samples) + config.batch_size - 1) // config.batch_size
    start_epoch = 0
    ckpt_path = out / "best.ckpt"
    log_path = out / "metrics.log"
    best_wer = _scan_best_wer(log_path)

    if resume is not None:
        ckpt = load_checkpoint(resume)
        if ckpt.seed != config.seed:
            raise ValueError(
                f"checkpoint seed {ckpt.seed} does not match config seed {config.seed}")
        if ckpt.step % steps_per_epoch:
            raise ValueError(
                f"checkpoint step {ckpt.step} is not an epoch boundary "
                f"({steps_per_epoch} steps per epoch)")
        restore_into(flat, ckpt.params)
        optimizer.step_count = ckpt.step
        for name in flat:
            optimizer.moment1[name] = np.array(ckpt.moment1[name], dtype=np.float32)
            optimizer.moment2[name] = np.array(ckpt.moment2[name], dtype=np.float32)
        start_epoch = ckpt.step // steps_per_epoch

    def save(step: int) -> None:
        save_checkpoint(ckpt_path, flat, step=step, seed=config.seed,
                        moment1=optimizer.moment1, moment2=optimizer.moment2)

    if config.epochs == 0 or (math.isinf(best_wer) and not ckpt_path.exists()):
        save(optimizer.step_count)  # epochs=0 contract: checkpoint == initialization
    if config.epochs == 0:
        return TrainResult(0, best_wer, ckpt_path, stopped_early=False)

    stopped_early = False
    epochs_run = start_epoch
    with open(log_path, "a", encoding="utf-8") as log:
        for epoch in range(start_epoch, config.epochs):
            order = np.random.default_rng(
                derive_seed(config.seed, "epoch", epoch)).permutation(len(train_samples))
            losses = []
            for lo in range(0, len(order), config.batch_size):
                batch = [train_samples[i] for i in order[lo:lo + config.batch_size]]
                try:
                    losses.append(train_step(params, flat, model_config, batch, optimizer))
                except FloatingPointError as exc:
                    raise TrainingDivergence(optimizer.step_count + 1, epoch, str(exc)) from exc
            report = evaluate(params, model_config, dev_samples, "dev")
            dev_wer = report.wer_percent
            improved = dev_wer < best_wer
            if improved:
                best_wer = dev_wer
                save(optimizer.step_count)
            log.write(f"epoch={epoch} loss={sum(losses) / len(losses):.6f} "
                      f"dev_wer={dev_wer:.4f} sub={report.substitutions} "
                      f"ins={report.insertions} del={report.deletions} "
                      f"best={'true' if improved else 'false'}\n")
            log.flush()
            epochs_run = epoch + 1
            if config.stop_wer is not None and dev_wer < config.stop_wer:
                log.write(f"early_stop=true epoch={epoch} dev_wer={dev_wer:.4f}\n")
                log.flush()
                stopped_early = True
                break
    return TrainResult(epochs_run, best_wer, ckpt_path, stopped_early=stopped_early)
