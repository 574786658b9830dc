"""Gate-map export: grayscale PGM heatmaps and temporal-gate traces.

Every gate in the architecture lives in (-0.5, 0.5), so images use one fixed
linear pixel map, floor((v + 0.5) * 256) clipped to [0, 255]: a zero gate is
exactly mid-gray (128), the extremes saturate to black/white. PGM (binary P5)
keeps the files dependency-free and byte-stable for golden tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as tt
from .convolution import ConvSpec, conv_nd
from .correlation import (
    compress_frames,
    correlation_maps,
    sample_neighbors,
    trajectory_features,
)
from .identification import (
    fuse_trajectories,
    identification_maps,
    multiscale_branches,
    reduce_channels,
)
from .model import ModelConfig, ModelParams
from .temporal_attention import (
    apply_temporal_attention,
    temporal_attention_maps,
    temporal_multiscale,
)
from .tensor import Tensor

_STAGE_SPEC = ConvSpec((1, 3, 3), stride=(1, 2, 2))


def gate_to_pixels(values) -> np.ndarray:
    """Map gate values from (-0.5, 0.5) linearly onto [0, 255]; 0 -> 128."""
    scaled = np.floor((np.asarray(values, dtype=np.float64) + 0.5) * 256.0)
    return np.clip(scaled, 0.0, 255.0).astype(np.uint8)


def write_pgm(path, image: np.ndarray) -> None:
    """Write a 2D uint8 array as a binary (P5) PGM file."""
    img = np.asarray(image)
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ValueError(f"PGM wants a 2D uint8 array, got {img.dtype} {img.shape}")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read back a binary PGM written by write_pgm."""
    raw = Path(path).read_bytes()
    magic, dims, maxval, pixels = raw.split(b"\n", 3)
    if magic != b"P5" or maxval != b"255":
        raise ValueError(f"unsupported PGM header in {path}")
    width, height = (int(v) for v in dims.split())
    return np.frombuffer(pixels, dtype=np.uint8, count=width * height).reshape(height, width)


@dataclass(frozen=True)
class StageMaps:
    """All gate activity of one spatial-temporal stage on one clip."""

    stage: int
    correlation_gates: np.ndarray  # (T, L, H, W) in (-0.5, 0.5)
    identification_gates: np.ndarray  # (T, H, W), channel-averaged M
    temporal_magnitudes: np.ndarray  # (T,), mean |U| over channels


def collect_stage_maps(video: Tensor, config: ModelConfig,
                       params: ModelParams) -> list:
    """Rerun the extractor, capturing each stage's gates along the way."""
    if not config.with_st_stages:
        raise ValueError("the baseline model has no gate maps to dump")
    results = []
    x = video
    with tt.no_grad():
        for i, stage in enumerate(params.stages, start=1):
            x = tt.relu(conv_nd(x, stage.weight, _STAGE_SPEC, bias=stage.bias))
            if i < 2:
                continue
            st = params.st_stages[i - 2]
            desc = compress_frames(x, st.corr)
            neighbors = sample_neighbors(x, config.windows[i - 2])
            cmaps = correlation_maps(desc, neighbors)
            summary = trajectory_features(cmaps, neighbors, st.corr.neighbor_weights)
            ident_gates = identification_maps(
                multiscale_branches(reduce_channels(x, st.ident), st.ident), st.ident)
            x = fuse_trajectories(x, summary, ident_gates, st.ident.gain)
            temporal_gates = temporal_attention_maps(
                temporal_multiscale(x, st.tattn), st.tattn)
            x = apply_temporal_attention(x, temporal_gates, st.tattn.gain)
            results.append(StageMaps(
                stage=i,
                correlation_gates=np.array(cmaps.gated.data),
                identification_gates=np.array(ident_gates.data.mean(axis=1)),
                temporal_magnitudes=np.array(np.abs(temporal_gates.data).mean(axis=1)),
            ))
    return results


def dump_stage_maps(maps, out_dir) -> list:
    """Write PGM heatmaps and temporal traces for every stage; returns paths.

    Layout per stage S: stage{S}_frame{T:03d}_corr{L}.pgm for each neighbor
    slot, stage{S}_frame{T:03d}_ident.pgm for the channel-averaged gates, and
    stage{S}_temporal.txt holding one per-frame gate magnitude per line.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for stage_maps in maps:
        s = stage_maps.stage
        t_len, slots = stage_maps.correlation_gates.shape[:2]
        for t in range(t_len):
            for l in range(slots):
                path = out / f"stage{s}_frame{t:03d}_corr{l}.pgm"
                write_pgm(path, gate_to_pixels(stage_maps.correlation_gates[t, l]))
                written.append(path)
            path = out / f"stage{s}_frame{t:03d}_ident.pgm"
            write_pgm(path, gate_to_pixels(stage_maps.identification_gates[t]))
            written.append(path)
        trace = out / f"stage{s}_temporal.txt"
        trace.write_text(
            "".join(f"{v:.6f}\n" for v in stage_maps.temporal_magnitudes),
            encoding="utf-8")
        written.append(trace)
    return written
