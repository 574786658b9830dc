"""Synthetic trajectory corpus: a bright square moving on a dark field.

Eight motion primitives define the vocabulary. Each one renders 6-10 frames
of a 12x12 (or growing/shrinking) square whose POSITION OVER TIME, not any
single frame, identifies it: the four sweeps all pass through the centered
pose halfway through, so per-frame appearance is deliberately ambiguous and
recognition requires cross-frame reasoning.

A sample concatenates 2-5 primitives (no immediate repeats, which keeps the
label feasible for a quarter-length CTC alignment) into one clip. Generation
is a pure function of (spec, seed): every sample draws from its own child
seed, so corpora are bitwise reproducible and any sample can be re-rendered
in isolation.

On disk: <dir>/<split>/<id>.frames holds one tensor record named "frames"
(T, 3, 64, 64) float32; <dir>/<split>/labels.txt lists `<id> <token names>`
one sample per line in generation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import read_records, write_records
from .config import CorpusSpec
from .seeding import derive_seed

FRAME_SIZE = 64
CHANNELS = 3
TOKENS_PER_SAMPLE = (2, 5)
FRAMES_PER_PRIMITIVE = (6, 10)
FIELD_VALUE = 0.05
SQUARE_VALUE = 0.95

VOCABULARY = {
    1: "left-sweep",
    2: "right-sweep",
    3: "up-sweep",
    4: "down-sweep",
    5: "diagonal",
    6: "circle",
    7: "grow",
    8: "shrink",
}
NAME_TO_TOKEN = {name: token for token, name in VOCABULARY.items()}

_CENTER = FRAME_SIZE // 2
_SWEEP_LO, _SWEEP_HI = 16, 48
_RADIUS = 12
_HALF = 6  # half edge of the moving square
_GROW_LO, _GROW_HI = 4, 14


def _square_pose(token: int, phase: float) -> tuple:
    """(row, col, half_edge) of the square at a phase in [0, 1]."""
    lo, hi = _SWEEP_LO, _SWEEP_HI
    if token == 1:  # left-sweep: right edge to left edge
        return _CENTER, hi - (hi - lo) * phase, _HALF
    if token == 2:  # right-sweep
        return _CENTER, lo + (hi - lo) * phase, _HALF
    if token == 3:  # up-sweep
        return hi - (hi - lo) * phase, _CENTER, _HALF
    if token == 4:  # down-sweep
        return lo + (hi - lo) * phase, _CENTER, _HALF
    if token == 5:  # diagonal: top-left to bottom-right
        pos = lo + (hi - lo) * phase
        return pos, pos, _HALF
    if token == 6:  # circle: one clockwise lap from the rightmost point
        angle = 2.0 * math.pi * phase
        return (_CENTER + _RADIUS * math.sin(angle),
                _CENTER + _RADIUS * math.cos(angle), _HALF)
    if token == 7:  # grow
        return _CENTER, _CENTER, _GROW_LO + (_GROW_HI - _GROW_LO) * phase
    if token == 8:  # shrink
        return _CENTER, _CENTER, _GROW_HI - (_GROW_HI - _GROW_LO) * phase
    raise ValueError(f"unknown motion primitive token {token}")


def render_primitive(token: int, n_frames: int) -> np.ndarray:
    """Render one primitive as (n_frames, 3, 64, 64) float32; pure function."""
    if n_frames < 2:
        raise ValueError("a motion primitive needs at least 2 frames")
    frames = np.full((n_frames, CHANNELS, FRAME_SIZE, FRAME_SIZE), FIELD_VALUE,
                     dtype=np.float32)
    for k in range(n_frames):
        row, col, half = _square_pose(token, k / (n_frames - 1))
        r0, r1 = int(round(row - half)), int(round(row + half))
        c0, c1 = int(round(col - half)), int(round(col + half))
        frames[k, :, max(r0, 0):min(r1, FRAME_SIZE), max(c0, 0):min(c1, FRAME_SIZE)] = SQUARE_VALUE
    return frames


def sample_seed(corpus_seed: int, split: str, index: int) -> int:
    return derive_seed(corpus_seed, "sample", split, index)


def make_sample(corpus_seed: int, split: str, index: int) -> tuple:
    """(frames, tokens) for one sample; deterministic in its arguments."""
    rng = np.random.default_rng(sample_seed(corpus_seed, split, index))
    count = int(rng.integers(TOKENS_PER_SAMPLE[0], TOKENS_PER_SAMPLE[1] + 1))
    tokens = []
    for _ in range(count):
        token = int(rng.integers(1, len(VOCABULARY) + 1))
        while tokens and token == tokens[-1]:  # immediate repeats break CTC feasibility
            token = int(rng.integers(1, len(VOCABULARY) + 1))
        tokens.append(token)
    segments = [
        render_primitive(
            token, int(rng.integers(FRAMES_PER_PRIMITIVE[0], FRAMES_PER_PRIMITIVE[1] + 1)))
        for token in tokens
    ]
    return np.concatenate(segments, axis=0), tuple(tokens)


def sample_id(split: str, index: int) -> str:
    return f"{split}{index:05d}"


def generate_corpus(spec: CorpusSpec, out_dir) -> None:
    """Write all splits under out_dir; same (spec, seed) -> byte-identical trees."""
    root = Path(out_dir)
    for split, size in spec.split_sizes().items():
        split_dir = root / split
        split_dir.mkdir(parents=True, exist_ok=True)
        lines = []
        for index in range(size):
            frames, tokens = make_sample(spec.seed, split, index)
            name = sample_id(split, index)
            write_records(split_dir / f"{name}.frames", {"frames": frames})
            lines.append(f"{name} {' '.join(VOCABULARY[t] for t in tokens)}\n")
        with open(split_dir / "labels.txt", "w", encoding="utf-8") as fh:
            fh.writelines(lines)


@dataclass(frozen=True)
class Sample:
    sample_id: str
    frames: np.ndarray  # (T, 3, 64, 64) float32
    tokens: tuple  # token ids, blank excluded


def load_split(data_dir, split: str) -> list:
    """Load one split fully into memory, in labels.txt order."""
    split_dir = Path(data_dir) / split
    labels_path = split_dir / "labels.txt"
    if not labels_path.exists():
        raise FileNotFoundError(f"no labels file at {labels_path}; run gen-data first")
    samples = []
    with open(labels_path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            parts = raw.split()
            if len(parts) < 2:
                raise ValueError(f"{labels_path}:{lineno}: expected `<id> <tokens...>`")
            name, names = parts[0], parts[1:]
            unknown = [n for n in names if n not in NAME_TO_TOKEN]
            if unknown:
                raise ValueError(
                    f"{labels_path}:{lineno}: unknown vocabulary entries {unknown}")
            records = read_records(split_dir / f"{name}.frames")
            if "frames" not in records:
                raise ValueError(f"{split_dir / name}.frames has no `frames` record")
            samples.append(Sample(
                sample_id=name,
                frames=np.ascontiguousarray(records["frames"], dtype=np.float32),
                tokens=tuple(NAME_TO_TOKEN[n] for n in names),
            ))
    return samples
