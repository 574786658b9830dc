"""Frame-level temporal gates.

The stage output is pooled to one vector per frame, reduced in width, and run
through parallel depthwise temporal convolutions with growing dilation. The
weighted branch sum is projected back to full width and squashed into
(-0.5, 0.5) per-frame channel gates, applied through a residual whose gain
starts at zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .convolution import ConvSpec, conv_nd, pool_spatial
from .tensor import Tensor, parameter


@dataclass
class TemporalAttentionParams:
    """Reduce projection, dilated temporal branch bank, recover projection, gain.

    Branch i (0-based) uses dilation i+1 with a depthwise extent-3 kernel;
    branch_weights starts at exactly 1/n_branches each, gain at exactly 0.
    """

    reduce_weight: Tensor
    branch_kernels: tuple
    branch_weights: Tensor
    recover_weight: Tensor
    recover_bias: Tensor
    gain: Tensor

    def named_tensors(self, prefix: str = ""):
        yield prefix + "reduce_weight", self.reduce_weight
        for i, kern in enumerate(self.branch_kernels):
            yield f"{prefix}branch_kernel_d{i + 1}", kern
        yield prefix + "branch_weights", self.branch_weights
        yield prefix + "recover_weight", self.recover_weight
        yield prefix + "recover_bias", self.recover_bias
        yield prefix + "gain", self.gain


def init_temporal_attention_params(channels: int, rng: np.random.Generator,
                                   reduction: int = 16, n_branches: int = 3,
                                   dtype=np.float32) -> TemporalAttentionParams:
    if channels % reduction:
        raise ValueError(f"channels {channels} not divisible by reduction {reduction}")
    reduced = channels // reduction
    kernels = tuple(
        parameter(rng.normal(0.0, 1.0 / math.sqrt(3), size=(reduced, 1, 3)), dtype=dtype)
        for _ in range(n_branches)
    )
    return TemporalAttentionParams(
        reduce_weight=parameter(
            rng.normal(0.0, 1.0 / math.sqrt(channels), size=(reduced, channels, 1)),
            dtype=dtype),
        branch_kernels=kernels,
        branch_weights=parameter(np.full(n_branches, 1.0 / n_branches), dtype=dtype),
        recover_weight=parameter(
            rng.normal(0.0, 1.0 / math.sqrt(reduced), size=(channels, reduced, 1)),
            dtype=dtype),
        recover_bias=parameter(np.zeros(channels), dtype=dtype),
        gain=parameter(0.0, dtype=dtype),
    )


def temporal_multiscale(y: Tensor, params: TemporalAttentionParams) -> Tensor:
    """Pool (T, C, H, W) to per-frame vectors, reduce width, sum dilated branches."""
    if y.ndim != 4:
        raise ValueError(f"expected a (T, C, H, W) input, got {y.shape}")
    pooled = tt.reshape(pool_spatial(y, "avg"), (y.shape[0], y.shape[1]))
    y_r = conv_nd(pooled, params.reduce_weight, ConvSpec((1,)))
    reduced = y_r.shape[1]
    out = None
    for i, kern in enumerate(params.branch_kernels):
        spec = ConvSpec((3,), dilation=(i + 1,), groups=reduced)
        term = tt.index_scalar(params.branch_weights, i) * conv_nd(y_r, kern, spec)
        out = term if out is None else out + term
    return out


def temporal_attention_maps(y_m: Tensor, params: TemporalAttentionParams) -> Tensor:
    """Recover full width and gate: sigmoid(recover(y_m)) - 0.5, shape (T, C)."""
    if y_m.shape[1] != params.recover_weight.shape[1]:
        raise ValueError(
            f"recover projection expects {params.recover_weight.shape[1]} channels, "
            f"got {y_m.shape[1]}")
    logits = conv_nd(y_m, params.recover_weight, ConvSpec((1,)), bias=params.recover_bias)
    return tt.sigmoid(logits) - 0.5


def apply_temporal_attention(y: Tensor, gates: Tensor, gain: Tensor) -> Tensor:
    """Residual merge z = y + gain * (y (*) gates), gates broadcast over H, W."""
    if gates.shape != y.shape[:2]:
        raise ValueError(f"gates {gates.shape} do not match frames/channels of {y.shape}")
    return y + gain * tt.scale_channels(y, gates)


def temporal_attention_forward(y: Tensor, params: TemporalAttentionParams) -> Tensor:
    """Full pass: pool, reduce, branches, gates, residual apply."""
    y_m = temporal_multiscale(y, params)
    gates = temporal_attention_maps(y_m, params)
    return apply_temporal_attention(y, gates, params.gain)
