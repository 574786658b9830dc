"""Closed-form multiply-add accounting.

One multiply-add counts as one FLOP throughout. Every component's count is
the exact integer evaluation of the formula recorded next to it; reports sum
components and render as aligned text or machine-readable key=value lines.

The headline comparison: correlating every position pair of neighboring
frames costs neighbors*T*C*(HW)^2, while the compressed path (pooled
descriptors, descriptor-vs-position maps, weighted pooling) is linear in HW.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .model import ModelConfig


@dataclass(frozen=True)
class FlopComponent:
    name: str
    count: int
    formula: str


@dataclass(frozen=True)
class FlopReport:
    title: str
    components: tuple

    @property
    def total_flops(self) -> int:
        return sum(c.count for c in self.components)

    @property
    def total_gflops(self) -> float:
        return self.total_flops / 1e9

    def as_text(self) -> str:
        width = max(len(c.name) for c in self.components)
        lines = [self.title]
        for c in self.components:
            lines.append(f"  {c.name:<{width}}  {c.count:>16,}  {c.formula}")
        lines.append(f"  {'total':<{width}}  {self.total_flops:>16,}  "
                     f"({self.total_gflops:.6f} GFLOPs)")
        return "\n".join(lines)

    def as_keyvalues(self) -> str:
        lines = [f"{c.name}={c.count}" for c in self.components]
        lines.append(f"total_flops={self.total_flops}")
        lines.append(f"total_gflops={self.total_gflops:.9f}")
        return "\n".join(lines)


def _positive(**dims):
    for name, value in dims.items():
        if value < 0 or (name not in ("L",) and value == 0):
            raise ValueError(f"dimension {name} must be positive, got {value}")


def count_pairwise_correlation(t: int, c: int, h: int, w: int,
                               neighbors: int = 2) -> FlopReport:
    """All-pairs affinity volumes against each temporal neighbor."""
    _positive(T=t, C=c, H=h, W=w, neighbors=neighbors)
    count = neighbors * t * c * h * h * w * w
    return FlopReport(
        title=f"pairwise correlation (T={t}, C={c}, H={h}, W={w}, neighbors={neighbors})",
        components=(
            FlopComponent("affinity_volumes", count, "neighbors*T*C*H^2*W^2"),
        ),
    )


def count_compressed_correlation(t: int, c: int, h: int, w: int, window: int) -> FlopReport:
    """Descriptor pooling and attention, correlation maps, weighted pooling."""
    _positive(T=t, C=c, H=h, W=w, L=window)
    pools = 2 * t * c * h * w
    attention = t * (3 * c * h * w + 2 * c * c)
    maps = t * window * c * h * w
    weighted = t * window * c * h * w
    return FlopReport(
        title=f"compressed correlation (T={t}, C={c}, H={h}, W={w}, L={window})",
        components=(
            FlopComponent("descriptor_pools", pools, "2*T*C*H*W"),
            FlopComponent("descriptor_attention", attention, "T*(3*C*H*W + 2*C^2)"),
            FlopComponent("correlation_maps", maps, "T*L*C*H*W"),
            FlopComponent("weighted_pooling", weighted, "T*L*C*H*W"),
        ),
    )


def _conv_count(out_elements: int, kernel_volume: int, c_in: int, groups: int = 1) -> int:
    return out_elements * kernel_volume * (c_in // groups)


def _as_int(value: Fraction, name: str) -> int:
    if value.denominator != 1:
        raise ValueError(f"non-integral FLOP count for {name}: {value}")
    return int(value)


def count_model(config: ModelConfig, frames: int) -> FlopReport:
    """Whole-model multiply-adds at a given clip length; linear in frames."""
    _positive(frames=frames)
    comps = []
    size = config.input_size
    in_c = config.in_channels
    for i, out_c in enumerate(config.stage_channels, start=1):
        size //= 2
        count = _conv_count(frames * out_c * size * size, 9, in_c)
        comps.append(FlopComponent(
            f"stage{i}_conv", count, f"T*{out_c}*{size}^2 * 3*3*{in_c}"))
        in_c = out_c
        if config.with_st_stages and i >= 2:
            window = config.windows[i - 2]
            corr = count_compressed_correlation(frames, out_c, size, size, window)
            comps.append(FlopComponent(
                f"stage{i}_correlation", corr.total_flops,
                f"compressed correlation at C={out_c}, HW={size}^2, L={window}"))
            reduced = out_c // config.reduction
            ident = (
                _conv_count(frames * reduced * size * size, 1, out_c)
                + 12 * _conv_count(frames * reduced * size * size, 27, 1)
                + _conv_count(frames * out_c * size * size, 1, reduced)
            )
            comps.append(FlopComponent(
                f"stage{i}_identification", ident,
                f"reduce {out_c}->{reduced} + 12 depthwise 3^3 + recover"))
            tattn = (
                frames * reduced * out_c
                + 3 * frames * reduced * 3
                + frames * out_c * reduced
            )
            comps.append(FlopComponent(
                f"stage{i}_temporal_attention", tattn,
                f"reduce {out_c}->{reduced} + 3 depthwise k3 + recover, on T*{out_c}"))
    d = config.feature_dim
    # Rate model: pooled lengths enter as exact rationals T/2 and T/4 so the
    # total stays strictly linear in frames; every count must still come out
    # an integer for the configured widths.
    half = Fraction(frames, 2)
    quarter = Fraction(frames, 4)
    comps.append(FlopComponent(
        "head_conv1", _conv_count(frames * d, 5, d), f"T*{d} * 5*{d}"))
    comps.append(FlopComponent(
        "head_conv2", _as_int(half * d * 5 * d, "head_conv2"),
        f"(T/2)*{d} * 5*{d}"))
    hidden = config.hidden
    lstm = Fraction(0)
    in_dim = d
    for _ in range(2):
        lstm += 2 * quarter * (4 * hidden * (in_dim + hidden))
        in_dim = 2 * hidden
    comps.append(FlopComponent(
        "head_bilstm", _as_int(lstm, "head_bilstm"),
        f"2 layers * 2 dirs * (T/4)*4*{hidden}*(in+{hidden})"))
    comps.append(FlopComponent(
        "head_classifier",
        _as_int(quarter * 2 * hidden * (config.vocab_size + 1), "head_classifier"),
        f"(T/4)*{2 * hidden}*{config.vocab_size + 1}"))
    return FlopReport(
        title=f"model (frames={frames}, input={config.input_size}, "
              f"st_stages={'on' if config.with_st_stages else 'off'})",
        components=tuple(comps),
    )
