"""Compressed cross-frame correlation.

Each frame of a (T, C, H, W) feature video is condensed into one C-vector by
fusing an average pool, a max pool, and a single-head attention readout. That
descriptor is dotted against every spatial position of L temporally adjacent
frames to form correlation maps, which are squashed into (-0.5, 0.5) gates and
used to pool a weighted trajectory summary per frame.

The quadratic all-pairs affinity between consecutive frames is kept alongside
as `legacy_pairwise_affinity`; it serves as the cost and behavior baseline the
compressed path is measured against, never as part of the forward model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .convolution import pool_spatial
from .tensor import Tensor, parameter


@dataclass
class CompactDescriptor:
    """Per-frame pooled views plus their fused combination, each (T, C, 1, 1)."""

    mean_pool: Tensor
    max_pool: Tensor
    attention: Tensor
    fused: Tensor


@dataclass
class NeighborSet:
    """Edge-clamped neighbor frames: (T, C, L, H, W) ordered by ascending offset."""

    frames: Tensor
    offsets: tuple


@dataclass
class CorrelationMaps:
    """Raw descriptor-vs-neighbor dot products and their (-0.5, 0.5) gated form."""

    raw: Tensor
    gated: Tensor


@dataclass
class AffinityVolume:
    """All-pairs channel-mean affinity (H, W, H, W) between two frames."""

    affinity: Tensor


@dataclass
class CorrelationParams:
    """Weights of the frame-compression and neighbor-weighting stages.

    fuse_weights mixes (mean, max, attention) descriptors and starts at exactly
    1/3 each; neighbor_weights has one entry per neighbor slot and starts at
    exactly 1/L. The attention readout keeps one learned query vector, key and
    value projections, an output projection, and a two-layer pointwise MLP
    whose hidden width equals the channel count.
    """

    fuse_weights: Tensor
    neighbor_weights: Tensor
    query: Tensor
    key_weight: Tensor
    value_weight: Tensor
    out_weight: Tensor
    out_bias: Tensor
    mlp_weight1: Tensor
    mlp_bias1: Tensor
    mlp_weight2: Tensor
    mlp_bias2: Tensor

    def named_tensors(self, prefix: str = ""):
        for field in (
            "fuse_weights", "neighbor_weights", "query", "key_weight", "value_weight",
            "out_weight", "out_bias", "mlp_weight1", "mlp_bias1", "mlp_weight2", "mlp_bias2",
        ):
            yield prefix + field, getattr(self, field)


def init_correlation_params(channels: int, window: int, rng: np.random.Generator,
                            dtype=np.float32) -> CorrelationParams:
    """Fresh parameters: exact 1/3 and 1/window mixing weights, scaled-normal
    projections, zero biases."""
    if window % 2 or window < 2:
        raise ValueError(f"neighbor window must be even and >= 2, got {window}")
    scale = 1.0 / math.sqrt(channels)

    def proj():
        return parameter(rng.normal(0.0, scale, size=(channels, channels)), dtype=dtype)

    return CorrelationParams(
        fuse_weights=parameter(np.full(3, 1.0 / 3.0), dtype=dtype),
        neighbor_weights=parameter(np.full(window, 1.0 / window), dtype=dtype),
        query=parameter(rng.normal(0.0, scale, size=(1, channels, 1, 1)), dtype=dtype),
        key_weight=proj(),
        value_weight=proj(),
        out_weight=proj(),
        out_bias=parameter(np.zeros(channels), dtype=dtype),
        mlp_weight1=proj(),
        mlp_bias1=parameter(np.zeros(channels), dtype=dtype),
        mlp_weight2=proj(),
        mlp_bias2=parameter(np.zeros(channels), dtype=dtype),
    )


def _attention_readout(x: Tensor, params: CorrelationParams) -> Tensor:
    """Single-head attention from one learned query over the H*W positions.

    No positional encoding, so the readout is invariant to any permutation of
    the spatial positions. Returns (T, C).
    """
    t_len, c = x.shape[0], x.shape[1]
    positions = x.shape[2] * x.shape[3]
    patches = tt.reshape(x, (t_len, c, positions))
    q = tt.reshape(params.query, (c,))
    keys = tt.einsum("cd,tdp->tcp", params.key_weight, patches)
    scores = tt.einsum("c,tcp->tp", q, keys) / math.sqrt(c)
    weights = tt.softmax_lastaxis(scores)
    values = tt.einsum("cd,tdp->tcp", params.value_weight, patches)
    context = tt.einsum("tp,tcp->tc", weights, values)
    attended = tt.add_rowwise(tt.einsum("cd,td->tc", params.out_weight, context),
                              params.out_bias)
    hidden = tt.relu(tt.add_rowwise(
        tt.einsum("cd,td->tc", params.mlp_weight1, attended), params.mlp_bias1))
    return tt.add_rowwise(tt.einsum("cd,td->tc", params.mlp_weight2, hidden),
                          params.mlp_bias2)


def compress_frames(x: Tensor, params: CorrelationParams) -> CompactDescriptor:
    """Condense every frame of (T, C, H, W) into pooled (T, C, 1, 1) descriptors."""
    if x.ndim != 4:
        raise ValueError(f"expected a (T, C, H, W) input, got {x.shape}")
    if params.query.shape[1] != x.shape[1]:
        raise ValueError(
            f"query has {params.query.shape[1]} channels, input has {x.shape[1]}")
    t_len, c = x.shape[0], x.shape[1]
    mean_pool = pool_spatial(x, "avg")
    max_pool = pool_spatial(x, "max")
    attention = tt.reshape(_attention_readout(x, params), (t_len, c, 1, 1))
    w = params.fuse_weights
    fused = (tt.index_scalar(w, 0) * mean_pool
             + tt.index_scalar(w, 1) * max_pool
             + tt.index_scalar(w, 2) * attention)
    return CompactDescriptor(mean_pool, max_pool, attention, fused)


def neighbor_offsets(window: int) -> tuple:
    """Ascending signed frame offsets: window/2 on each side, skipping zero."""
    if window % 2 or window < 2:
        raise ValueError(f"neighbor window must be even and >= 2, got {window}")
    half = window // 2
    return tuple(range(-half, 0)) + tuple(range(1, half + 1))


def sample_neighbors(x: Tensor, window: int) -> NeighborSet:
    """Gather the window frames around each frame, clamping at the clip edges."""
    if x.ndim != 4:
        raise ValueError(f"expected a (T, C, H, W) input, got {x.shape}")
    offsets = neighbor_offsets(window)
    t_len = x.shape[0]
    base = np.arange(t_len)
    slots = []
    for off in offsets:
        idx = np.clip(base + off, 0, t_len - 1)
        shifted = tt.take_rows(x, idx)  # (T, C, H, W)
        slots.append(tt.reshape(shifted, (t_len, x.shape[1], 1, x.shape[2], x.shape[3])))
    return NeighborSet(frames=tt.concat(slots, axis=2), offsets=offsets)


def correlation_maps(desc: CompactDescriptor, neighbors: NeighborSet) -> CorrelationMaps:
    """Dot the fused descriptor against every neighbor position, then gate.

    raw(t, l, i, j) = sum_c fused(t, c) * frames(t, c, l, i, j); the gate is
    sigmoid(raw) - 0.5, keeping every gated entry inside (-0.5, 0.5) up to
    sigmoid's own floating-point saturation (|raw| beyond roughly 36 in
    float64), which unit-scale features never approach.
    """
    fused, frames = desc.fused, neighbors.frames
    if fused.shape[1] != frames.shape[1]:
        raise ValueError(
            f"descriptor has {fused.shape[1]} channels, neighbors have {frames.shape[1]}")
    if fused.shape[0] != frames.shape[0]:
        raise ValueError("descriptor and neighbor frame counts differ")
    fused2d = tt.reshape(fused, (fused.shape[0], fused.shape[1]))
    raw = tt.einsum("tc,tclij->tlij", fused2d, frames)
    gated = tt.sigmoid(raw) - 0.5
    return CorrelationMaps(raw=raw, gated=gated)


def trajectory_features(maps: CorrelationMaps, neighbors: NeighborSet,
                        beta: Tensor) -> Tensor:
    """Weighted pooling of neighbor content under the gated correlation maps.

    out(t, c) = sum_l beta_l * sum_ij gated(t, l, i, j) * frames(t, c, l, i, j),
    returned as (T, C, 1, 1).
    """
    frames = neighbors.frames
    if beta.shape != (frames.shape[2],):
        raise ValueError(
            f"need one weight per neighbor slot: {beta.shape} vs L={frames.shape[2]}")
    pooled = tt.einsum("tlij,tclij,l->tc", maps.gated, frames, beta)
    return tt.reshape(pooled, (frames.shape[0], frames.shape[1], 1, 1))


def legacy_pairwise_affinity(frame_t: Tensor, frame_t1: Tensor) -> AffinityVolume:
    """Channel-mean dot products between all position pairs of two frames.

    affinity(i, j, k, l) = (1/C) * sum_c frame_t(c, i, j) * frame_t1(c, k, l).
    Quadratic in H*W; kept as the baseline the compressed path replaces.
    """
    if frame_t.ndim != 3 or frame_t.shape != frame_t1.shape:
        raise ValueError(
            f"expected matching (C, H, W) frames, got {frame_t.shape} and {frame_t1.shape}")
    c = frame_t.shape[0]
    vol = tt.einsum("cij,ckl->ijkl", frame_t, frame_t1) / float(c)
    return AffinityVolume(affinity=vol)


def correlation_forward(x: Tensor, window: int, params: CorrelationParams) -> Tensor:
    """Full compressed-correlation pass: compress, sample, correlate, pool."""
    desc = compress_frames(x, params)
    neighbors = sample_neighbors(x, window)
    maps = correlation_maps(desc, neighbors)
    return trajectory_features(maps, neighbors, params.neighbor_weights)
