"""Spatial identification gates.

A channel-reduced copy of the stage input runs through a bank of depthwise
3x3x3 convolutions whose dilations grow per branch, spanning the same support
as one dense 9x7x7 kernel at a fraction of the cost. The weighted branch sum
is projected back to full width and squashed into (-0.5, 0.5) gate maps that
mark where the trajectory summary should be trusted. The gated content enters
through a residual whose gain starts at zero, so a freshly initialized stage
is an exact identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .convolution import ConvSpec, conv_nd
from .tensor import Tensor, parameter


@dataclass
class IdentificationParams:
    """Reduce projection, dilated branch bank, recover projection, residual gain.

    Branch kernels are depthwise over the reduced channels, ordered spatial
    scale first: branch (i, j) has dilation (j, i, i) over (frames, H, W).
    scale_weights holds one coefficient per branch in the same order, starting
    at exactly 1/(n_spatial * n_temporal). gain starts at exactly 0.
    """

    reduce_weight: Tensor
    branch_kernels: tuple
    scale_weights: Tensor
    recover_weight: Tensor
    recover_bias: Tensor
    gain: Tensor
    n_spatial: int
    n_temporal: int

    def named_tensors(self, prefix: str = ""):
        yield prefix + "reduce_weight", self.reduce_weight
        for idx, kern in enumerate(self.branch_kernels):
            i, j = divmod(idx, self.n_temporal)
            yield f"{prefix}branch_kernel_s{i + 1}t{j + 1}", kern
        yield prefix + "scale_weights", self.scale_weights
        yield prefix + "recover_weight", self.recover_weight
        yield prefix + "recover_bias", self.recover_bias
        yield prefix + "gain", self.gain


def branch_dilations(n_spatial: int, n_temporal: int) -> tuple:
    """(frames, H, W) dilation triples in scale_weights order."""
    return tuple(
        (j, i, i)
        for i in range(1, n_spatial + 1)
        for j in range(1, n_temporal + 1)
    )


def init_identification_params(channels: int, rng: np.random.Generator, reduction: int = 16,
                               n_spatial: int = 3, n_temporal: int = 4,
                               dtype=np.float32) -> IdentificationParams:
    if channels % reduction:
        raise ValueError(f"channels {channels} not divisible by reduction {reduction}")
    reduced = channels // reduction
    n_branches = n_spatial * n_temporal
    kernels = tuple(
        parameter(rng.normal(0.0, 1.0 / math.sqrt(27), size=(reduced, 1, 3, 3, 3)), dtype=dtype)
        for _ in range(n_branches)
    )
    return IdentificationParams(
        reduce_weight=parameter(
            rng.normal(0.0, 1.0 / math.sqrt(channels), size=(reduced, channels, 1, 1, 1)),
            dtype=dtype),
        branch_kernels=kernels,
        scale_weights=parameter(np.full(n_branches, 1.0 / n_branches), dtype=dtype),
        recover_weight=parameter(
            rng.normal(0.0, 1.0 / math.sqrt(reduced), size=(channels, reduced, 1, 1, 1)),
            dtype=dtype),
        recover_bias=parameter(np.zeros(channels), dtype=dtype),
        gain=parameter(0.0, dtype=dtype),
        n_spatial=n_spatial,
        n_temporal=n_temporal,
    )


def reduce_channels(x: Tensor, params: IdentificationParams) -> Tensor:
    """Project (T, C, H, W) down to the reduced width with a pointwise conv (no bias)."""
    return conv_nd(x, params.reduce_weight, ConvSpec((1, 1, 1)))


def multiscale_branches(x_r: Tensor, params: IdentificationParams) -> Tensor:
    """Weighted sum of depthwise dilated 3x3x3 branches, length-preserving."""
    reduced = x_r.shape[1]
    if params.branch_kernels[0].shape[0] != reduced:
        raise ValueError(
            f"branch kernels built for {params.branch_kernels[0].shape[0]} channels, "
            f"input has {reduced}")
    out = None
    for idx, (kern, dil) in enumerate(
            zip(params.branch_kernels, branch_dilations(params.n_spatial, params.n_temporal))):
        spec = ConvSpec((3, 3, 3), dilation=dil, groups=reduced)
        term = tt.index_scalar(params.scale_weights, idx) * conv_nd(x_r, kern, spec)
        out = term if out is None else out + term
    return out


def identification_maps(x_m: Tensor, params: IdentificationParams) -> Tensor:
    """Recover full width and gate: sigmoid(recover(x_m)) - 0.5, in (-0.5, 0.5)."""
    if x_m.shape[1] != params.recover_weight.shape[1]:
        raise ValueError(
            f"recover projection expects {params.recover_weight.shape[1]} channels, "
            f"got {x_m.shape[1]}")
    logits = conv_nd(x_m, params.recover_weight, ConvSpec((1, 1, 1)), bias=params.recover_bias)
    return tt.sigmoid(logits) - 0.5


def fuse_trajectories(x: Tensor, summary: Tensor, maps: Tensor, gain: Tensor) -> Tensor:
    """Residual merge y = x + gain * (summary (*) maps), summary broadcast over H, W."""
    if maps.shape != x.shape:
        raise ValueError(f"gate maps {maps.shape} do not match input {x.shape}")
    if summary.shape != (x.shape[0], x.shape[1], 1, 1):
        raise ValueError(
            f"trajectory summary must be (T, C, 1, 1), got {summary.shape}")
    summary2d = tt.reshape(summary, (x.shape[0], x.shape[1]))
    return x + gain * tt.scale_channels(maps, summary2d)


def identification_forward(x: Tensor, summary: Tensor, params: IdentificationParams) -> Tensor:
    """Full pass: reduce, multi-scale branches, gates, residual fuse."""
    x_r = reduce_channels(x, params)
    x_m = multiscale_branches(x_r, params)
    maps = identification_maps(x_m, params)
    return fuse_trajectories(x, summary, maps, params.gain)
