"""Line-based key=value configuration for runs and corpus generation.

Files are UTF-8 text; `#` starts a comment (whole line or trailing), blank
lines are ignored. Every key has a documented default, and unknown keys are
a hard error so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .model import ModelConfig


def parse_keyvalue_lines(text: str) -> dict:
    """Parse `key=value` lines into an ordered str -> str mapping."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key, value = key.strip(), value.strip()
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        if key in out:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _parse_bool(value: str, key: str) -> bool:
    lowered = value.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    raise ValueError(f"{key} must be true or false, got {value!r}")


def _parse_int_tuple(value: str) -> tuple:
    return tuple(int(part.strip()) for part in value.split(","))


@dataclass(frozen=True)
class RunConfig:
    """One training/evaluation run, fully determined together with the corpus.

    Defaults give the desk-scale reference run:
      data_dir=data            corpus root (gen-data output)
      vocab_size=8             motion-primitive vocabulary size
      input_size=64            square frame edge in pixels
      in_channels=3            image channels
      stage_channels=16,32,64,128   widths of the four extractor stages
      windows=2,6,10           correlation window per spatial-temporal stage
      hidden=128               recurrent width per direction
      reduction=16             channel reduction inside the gate modules
      with_st_stages=true      false trains the module-free baseline
      lr=0.001                 Adam learning rate
      epochs=30                training epochs
      batch_size=2             samples per optimizer step
      seed=42                  master RNG seed
      stop_wer=off             early-stop threshold on dev WER %, or `off`
      flops_frames=16          clip length assumed by the `flops` report
    """

    data_dir: str = "data"
    vocab_size: int = 8
    input_size: int = 64
    in_channels: int = 3
    stage_channels: tuple = (16, 32, 64, 128)
    windows: tuple = (2, 6, 10)
    hidden: int = 128
    reduction: int = 16
    with_st_stages: bool = True
    lr: float = 1e-3
    epochs: int = 30
    batch_size: int = 2
    seed: int = 42
    stop_wer: float | None = None
    flops_frames: int = 16

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.flops_frames < 1:
            raise ValueError("flops_frames must be >= 1")
        if self.stop_wer is not None and self.stop_wer < 0:
            raise ValueError("stop_wer must be >= 0 or off")
        self.model_config()  # surface architecture errors at load time

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            vocab_size=self.vocab_size,
            stage_channels=self.stage_channels,
            input_size=self.input_size,
            windows=self.windows,
            hidden=self.hidden,
            in_channels=self.in_channels,
            reduction=self.reduction,
            with_st_stages=self.with_st_stages,
        )

    def lines(self) -> str:
        """Serialize the resolved configuration back to parseable key=value text."""
        rendered = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "stop_wer":
                text = "off" if value is None else repr(float(value))
            elif isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, tuple):
                text = ",".join(str(v) for v in value)
            else:
                text = str(value)
            rendered.append(f"{f.name}={text}")
        return "\n".join(rendered) + "\n"


_RUN_PARSERS = {
    "data_dir": lambda v: v,
    "vocab_size": int,
    "input_size": int,
    "in_channels": int,
    "stage_channels": _parse_int_tuple,
    "windows": _parse_int_tuple,
    "hidden": int,
    "reduction": int,
    "with_st_stages": lambda v: _parse_bool(v, "with_st_stages"),
    "lr": float,
    "epochs": int,
    "batch_size": int,
    "seed": int,
    "stop_wer": lambda v: None if v.lower() in ("off", "none", "") else float(v),
    "flops_frames": int,
}


def run_config_from_mapping(mapping: dict) -> RunConfig:
    unknown = sorted(set(mapping) - set(_RUN_PARSERS))
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    kwargs = {key: _RUN_PARSERS[key](value) for key, value in mapping.items()}
    return RunConfig(**kwargs)


def load_run_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return run_config_from_mapping(parse_keyvalue_lines(fh.read()))


@dataclass(frozen=True)
class CorpusSpec:
    """Synthetic corpus knobs; geometry and vocabulary are generator invariants.

    Defaults:
      train=400  dev=50  test=50   split sizes in samples
      seed=42                      master corpus seed
    """

    train: int = 400
    dev: int = 50
    test: int = 50
    seed: int = 42

    def __post_init__(self):
        for name in ("train", "dev", "test"):
            if getattr(self, name) < 0:
                raise ValueError(f"split size {name} must be >= 0")

    def split_sizes(self) -> dict:
        return {"train": self.train, "dev": self.dev, "test": self.test}


_SPEC_PARSERS = {"train": int, "dev": int, "test": int, "seed": int}


def corpus_spec_from_mapping(mapping: dict) -> CorpusSpec:
    unknown = sorted(set(mapping) - set(_SPEC_PARSERS))
    if unknown:
        raise ValueError(f"unknown corpus spec keys: {', '.join(unknown)}")
    return CorpusSpec(**{k: _SPEC_PARSERS[k](v) for k, v in mapping.items()})


def load_corpus_spec(path) -> CorpusSpec:
    with open(path, encoding="utf-8") as fh:
        return corpus_spec_from_mapping(parse_keyvalue_lines(fh.read()))
