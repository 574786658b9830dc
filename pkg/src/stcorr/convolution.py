"""Grouped, dilated, strided convolution and pooling on the autodiff tensors.

Layouts: rank-2 inputs are (T, C) with convolution along the leading frame
axis; rank-4 inputs are (T, C, H, W) with convolution jointly over (T, H, W).
Kernels are (C_out, C_in/groups, *extents). Padding is symmetric zero padding
sized so that stride-1 convolutions preserve length (the package default);
output extents follow the usual dilated-convolution arithmetic.

Two execution paths, identical results: im2col + GEMM for groups == 1, and a
vectorized kernel-tap loop for depthwise (groups == channels) convolutions.
Other group counts fall back to per-group im2col.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, _acc, _node


@dataclass(frozen=True)
class ConvSpec:
    """Kernel extents per convolved axis plus dilation, stride, groups, padding."""

    kernel: tuple
    dilation: tuple = None
    stride: tuple = None
    groups: int = 1
    padding: str = "same_zero"

    def __post_init__(self):
        k = tuple(int(v) for v in self.kernel)
        object.__setattr__(self, "kernel", k)
        object.__setattr__(self, "dilation", tuple(int(v) for v in (self.dilation or (1,) * len(k))))
        object.__setattr__(self, "stride", tuple(int(v) for v in (self.stride or (1,) * len(k))))
        if len(self.dilation) != len(k) or len(self.stride) != len(k):
            raise ValueError("dilation/stride rank must match kernel rank")
        if any(d < 1 for d in self.dilation):
            raise ValueError("dilation must be >= 1 on every axis")
        if any(s < 1 for s in self.stride):
            raise ValueError("stride must be >= 1 on every axis")
        if self.groups < 1:
            raise ValueError("groups must be positive")
        if self.padding != "same_zero":
            raise ValueError(f"unsupported padding mode: {self.padding}")

    def pad_per_axis(self):
        # symmetric zero padding that preserves length at stride 1
        for k, d in zip(self.kernel, self.dilation):
            if k % 2 == 0:
                raise ValueError("same_zero padding needs odd kernel extents")
        return tuple(d * (k - 1) // 2 for k, d in zip(self.kernel, self.dilation))

    def out_extent(self, length: int, axis: int) -> int:
        k, d, s = self.kernel[axis], self.dilation[axis], self.stride[axis]
        p = self.pad_per_axis()[axis]
        return (length + 2 * p - d * (k - 1) - 1) // s + 1


def _axes_for(rank: int):
    if rank == 2:
        return (0,)  # (T, C): convolve frames
    if rank == 4:
        return (0, 2, 3)  # (T, C, H, W): convolve frames and space
    raise ValueError(f"conv_nd expects rank-2 or rank-4 input, got rank {rank}")


def _check(x: Tensor, kernel: Tensor, spec: ConvSpec, bias):
    axes = _axes_for(x.ndim)
    if len(spec.kernel) != len(axes):
        raise ValueError(f"kernel rank {len(spec.kernel)} does not fit input rank {x.ndim}")
    if kernel.ndim != 2 + len(axes):
        raise ValueError(f"kernel tensor must be (C_out, C_in/groups, *extents), got {kernel.shape}")
    if tuple(kernel.shape[2:]) != spec.kernel:
        raise ValueError(f"kernel extents {kernel.shape[2:]} do not match spec {spec.kernel}")
    c_in = x.shape[1]
    c_out = kernel.shape[0]
    if c_in % spec.groups or c_out % spec.groups:
        raise ValueError(f"groups={spec.groups} must divide C_in={c_in} and C_out={c_out}")
    if kernel.shape[1] != c_in // spec.groups:
        raise ValueError(f"kernel expects {kernel.shape[1]} channels per group, input has {c_in // spec.groups}")
    if bias is not None and bias.shape != (c_out,):
        raise ValueError(f"bias must be ({c_out},), got {bias.shape}")


def _pad_input(data: np.ndarray, axes, pads):
    widths = [(0, 0)] * data.ndim
    for ax, p in zip(axes, pads):
        widths[ax] = (p, p)
    return np.pad(data, widths) if any(p for p in pads) else data


def conv_nd(x: Tensor, kernel: Tensor, spec: ConvSpec, bias: Tensor | None = None) -> Tensor:
    """Convolve x with kernel under spec; channels sit on axis 1 throughout."""
    _check(x, kernel, spec, bias)
    if spec.groups == 1:
        out = _conv_im2col(x, kernel, spec)
    elif spec.groups == x.shape[1] == kernel.shape[0]:
        out = _conv_depthwise(x, kernel, spec)
    else:
        out = _conv_grouped(x, kernel, spec)
    if bias is not None:
        out = _add_channel_bias(out, bias)
    return out


def _add_channel_bias(x: Tensor, bias: Tensor) -> Tensor:
    reducer = tuple(ax for ax in range(x.ndim) if ax != 1)
    shape = tuple(-1 if ax == 1 else 1 for ax in range(x.ndim))

    def backward(g):
        _acc(x, g)
        _acc(bias, g.sum(axis=reducer))

    return _node(x.data + bias.data.reshape(shape), (x, bias), backward)


def _conv_im2col(x: Tensor, kernel: Tensor, spec: ConvSpec) -> Tensor:
    axes = _axes_for(x.ndim)
    pads = spec.pad_per_axis()
    c_out = kernel.shape[0]
    cols, out_dims, padded_shape = _im2col(x.data, axes, spec, pads)
    w_mat = kernel.data.reshape(c_out, -1)
    out_mat = cols @ w_mat.T  # (prod(out_dims), C_out)
    out = _mat_to_output(out_mat, out_dims, c_out, x.ndim)

    def backward(g):
        g_mat = _output_to_mat(g, x.ndim)
        _acc(kernel, (g_mat.T @ cols).reshape(kernel.shape))
        if x.requires_grad:
            dcols = g_mat @ w_mat
            _acc(x, _col2im(dcols, x.shape, padded_shape, out_dims, axes, spec, pads, kernel.shape))

    return _node(out, (x, kernel), backward)


def _windows(data, axes, spec, pads):
    """Strided tap windows: (out positions..., taps...) view over the padding."""
    padded = _pad_input(data, axes, pads)
    spans = tuple(d * (k - 1) + 1 for k, d in zip(spec.kernel, spec.dilation))
    win = np.lib.stride_tricks.sliding_window_view(padded, spans, axis=axes)
    # stride the output positions, then subsample dilated taps inside each window
    sel = [slice(None)] * win.ndim
    for i, ax in enumerate(axes):
        sel[ax] = slice(None, None, spec.stride[i])
    for i in range(len(axes)):
        sel[data.ndim + i] = slice(None, None, spec.dilation[i])
    win = win[tuple(sel)]
    out_dims = tuple(win.shape[ax] for ax in axes)
    return win, out_dims, padded


def _im2col(data, axes, spec, pads):
    win, out_dims, padded = _windows(data, axes, spec, pads)
    if data.ndim == 2:  # win: (T', C, kt)
        cols = win.reshape(out_dims[0], -1)
    else:  # win: (T', C, H', W', kt, kh, kw) -> (T', H', W', C, kt, kh, kw)
        win = win.transpose(0, 2, 3, 1, 4, 5, 6)
        cols = win.reshape(int(np.prod(out_dims)), -1)
    return np.ascontiguousarray(cols), out_dims, padded.shape


def _mat_to_output(out_mat, out_dims, c_out, rank):
    if rank == 2:
        return out_mat  # (T', C_out)
    t, h, w = out_dims
    return np.ascontiguousarray(out_mat.reshape(t, h, w, c_out).transpose(0, 3, 1, 2))


def _output_to_mat(g, rank):
    if rank == 2:
        return g
    t, c, h, w = g.shape
    return np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(t * h * w, c)


def _col2im(dcols, x_shape, padded_shape, out_dims, axes, spec, pads, kernel_shape):
    c_in_g = kernel_shape[1]
    dpad = np.zeros(padded_shape, dtype=dcols.dtype)
    if len(axes) == 1:
        dwin = dcols.reshape(out_dims[0], c_in_g, spec.kernel[0])
        for a in range(spec.kernel[0]):
            start = a * spec.dilation[0]
            stop = start + (out_dims[0] - 1) * spec.stride[0] + 1
            dpad[start:stop:spec.stride[0]] += dwin[:, :, a]
        return dpad[pads[0]:pads[0] + x_shape[0]] if pads[0] else dpad
    t, h, w = out_dims
    dwin = dcols.reshape(t, h, w, c_in_g, *spec.kernel)
    for a, b, c in itertools.product(*(range(k) for k in spec.kernel)):
        starts = (a * spec.dilation[0], b * spec.dilation[1], c * spec.dilation[2])
        sl = tuple(
            slice(s0, s0 + (n - 1) * st + 1, st)
            for s0, n, st in zip(starts, out_dims, spec.stride)
        )
        dpad[sl[0], :, sl[1], sl[2]] += dwin[:, :, :, :, a, b, c].transpose(0, 3, 1, 2)
    unpad = (
        slice(pads[0], pads[0] + x_shape[0]),
        slice(None),
        slice(pads[1], pads[1] + x_shape[2]),
        slice(pads[2], pads[2] + x_shape[3]),
    )
    return dpad[unpad]


def _tap_slices(starts, out_dims, strides):
    return tuple(
        slice(s0, s0 + (n - 1) * st + 1, st) for s0, n, st in zip(starts, out_dims, strides)
    )


def _conv_depthwise(x: Tensor, kernel: Tensor, spec: ConvSpec) -> Tensor:
    """groups == C_in == C_out: one filter per channel, summed over taps."""
    axes = _axes_for(x.ndim)
    pads = spec.pad_per_axis()
    padded = _pad_input(x.data, axes, pads)
    out_dims = tuple(spec.out_extent(x.shape[ax], i) for i, ax in enumerate(axes))
    taps = list(itertools.product(*(range(k) for k in spec.kernel)))

    def tap_view(source, tap):
        starts = tuple(t * d for t, d in zip(tap, spec.dilation))
        sl = _tap_slices(starts, out_dims, spec.stride)
        if len(axes) == 1:
            return source[sl[0]]
        return source[sl[0], :, sl[1], sl[2]]

    def kern_coef(kern_data, tap):
        coef = kern_data[(slice(None), 0) + tap]  # (C,)
        return coef[None, :] if len(axes) == 1 else coef[None, :, None, None]

    out_shape = (out_dims[0], x.shape[1]) if len(axes) == 1 else (
        out_dims[0], x.shape[1], out_dims[1], out_dims[2])
    out = np.zeros(out_shape, dtype=x.data.dtype)
    for tap in taps:
        out += kern_coef(kernel.data, tap) * tap_view(padded, tap)

    def backward(g):
        if kernel.requires_grad:
            dk = np.zeros_like(kernel.data)
            sum_axes = (0,) if len(axes) == 1 else (0, 2, 3)
            for tap in taps:
                dk[(slice(None), 0) + tap] = (g * tap_view(padded, tap)).sum(axis=sum_axes)
            _acc(kernel, dk)
        if x.requires_grad:
            dpad = np.zeros(padded.shape, dtype=g.dtype)
            for tap in taps:
                starts = tuple(t * d for t, d in zip(tap, spec.dilation))
                sl = _tap_slices(starts, out_dims, spec.stride)
                contrib = kern_coef(kernel.data, tap) * g
                if len(axes) == 1:
                    dpad[sl[0]] += contrib
                else:
                    dpad[sl[0], :, sl[1], sl[2]] += contrib
            if len(axes) == 1:
                dx = dpad[pads[0]:pads[0] + x.shape[0]] if pads[0] else dpad
            else:
                dx = dpad[
                    pads[0]:pads[0] + x.shape[0], :,
                    pads[1]:pads[1] + x.shape[2], pads[2]:pads[2] + x.shape[3]]
            _acc(x, dx)

    return _node(out, (x, kernel), backward)


def _conv_grouped(x: Tensor, kernel: Tensor, spec: ConvSpec) -> Tensor:
    from .tensor import concat, slice_axis

    g = spec.groups
    cin_g = x.shape[1] // g
    cout_g = kernel.shape[0] // g
    sub_spec = ConvSpec(spec.kernel, spec.dilation, spec.stride, 1, spec.padding)
    pieces = []
    for i in range(g):
        xi = slice_axis(x, 1, i * cin_g, (i + 1) * cin_g)
        ki = slice_axis(kernel, 0, i * cout_g, (i + 1) * cout_g)
        pieces.append(_conv_im2col(xi, ki, sub_spec))
    return concat(pieces, axis=1)


# -- pooling ---------------------------------------------------------------------


def pool_spatial(x: Tensor, mode: str) -> Tensor:
    """Collapse the two trailing spatial axes to 1x1 (arithmetic mean or max)."""
    if x.ndim < 2:
        raise ValueError("pool_spatial needs two trailing spatial axes")
    h, w = x.shape[-2], x.shape[-1]
    if h == 0 or w == 0:
        raise ValueError("empty spatial extent")
    if mode == "avg":
        out = x.data.mean(axis=(-2, -1), keepdims=True)

        def backward(g):
            _acc(x, np.broadcast_to(g / (h * w), x.shape))

        return _node(out, (x,), backward)
    if mode == "max":
        flat = x.data.reshape(x.shape[:-2] + (h * w,))
        idx = flat.argmax(axis=-1)  # first maximum on ties
        out = np.take_along_axis(flat, idx[..., None], axis=-1).reshape(x.shape[:-2] + (1, 1))

        def backward(g):
            dflat = np.zeros_like(flat)
            np.put_along_axis(dflat, idx[..., None], g.reshape(x.shape[:-2] + (1,)), axis=-1)
            _acc(x, dflat.reshape(x.shape))

        return _node(out, (x,), backward)
    raise ValueError(f"unknown pooling mode: {mode!r}")


def pool_frames_max(x: Tensor) -> Tensor:
    """Max-pool frame pairs, kernel 2 stride 2, on a (T, C) sequence."""
    if x.ndim != 2:
        raise ValueError("pool_frames_max expects a (T, C) input")
    t_out = x.shape[0] // 2
    if t_out == 0:
        raise ValueError("need at least 2 frames to pool")
    pairs = x.data[: 2 * t_out].reshape(t_out, 2, x.shape[1])
    idx = pairs.argmax(axis=1)  # first maximum on ties
    out = np.take_along_axis(pairs, idx[:, None, :], axis=1)[:, 0, :]

    def backward(g):
        dpairs = np.zeros_like(pairs)
        np.put_along_axis(dpairs, idx[:, None, :], g[:, None, :], axis=1)
        dx = np.zeros_like(x.data)
        dx[: 2 * t_out] = dpairs.reshape(2 * t_out, x.shape[1])
        _acc(x, dx)

    return _node(out, (x,), backward)
