"""The desk-scale video-to-token model.

A four-stage strided 2D CNN runs per frame; after stages 2, 3, and 4 a
spatial-temporal stage (compressed correlation + identification gates +
temporal gates) refines the features through residuals whose gains start at
zero, so a freshly initialized model is bitwise identical to the stage-only
baseline. A spatial pool hands one vector per frame to the temporal head:
two length-preserving 1D convolutions each followed by a stride-2 max pool,
a two-layer bidirectional LSTM, and a linear classifier over the vocabulary
plus blank. Output length is floor(floor(T/2)/2).

Parameters are held in small dataclasses; `flat()` produces the stable
name -> tensor mapping shared by the gradient tape, the optimizer, and the
checkpoint format. Every tensor is drawn from its own name-derived RNG
stream, so the baseline and the full model share extractor and head weights
bitwise for the same master seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .convolution import ConvSpec, conv_nd, pool_frames_max, pool_spatial
from .correlation import CorrelationParams, correlation_forward, init_correlation_params
from .ctc import BLANK
from .identification import (
    IdentificationParams,
    identification_forward,
    init_identification_params,
)
from .seeding import derive_seed
from .tensor import Tensor, parameter
from .temporal_attention import (
    TemporalAttentionParams,
    init_temporal_attention_params,
    temporal_attention_forward,
)


@dataclass(frozen=True)
class ModelConfig:
    """Architecture knobs; defaults give the desk-scale reference model."""

    vocab_size: int
    stage_channels: tuple = (16, 32, 64, 128)
    input_size: int = 64
    windows: tuple = (2, 6, 10)
    hidden: int = 128
    in_channels: int = 3
    reduction: int = 16
    with_st_stages: bool = True
    blank: int = BLANK

    def __post_init__(self):
        object.__setattr__(self, "stage_channels", tuple(int(c) for c in self.stage_channels))
        object.__setattr__(self, "windows", tuple(int(w) for w in self.windows))
        if self.vocab_size < 1:
            raise ValueError("vocabulary must hold at least one token")
        if self.blank != BLANK:
            raise ValueError("blank index is fixed to 0")
        if len(self.stage_channels) != 4:
            raise ValueError("the extractor is a fixed four-stage design")
        if len(self.windows) != 3:
            raise ValueError("need one correlation window per stage 2, 3, 4")
        if any(w < 2 or w % 2 for w in self.windows):
            raise ValueError("correlation windows must be even and >= 2")
        if self.input_size % 16:
            raise ValueError("input size must survive four stride-2 stages")
        for c in self.stage_channels[1:]:
            if c % self.reduction:
                raise ValueError(
                    f"stage width {c} not divisible by reduction {self.reduction}")

    @property
    def feature_dim(self) -> int:
        return self.stage_channels[-1]

    def logit_length(self, t: int) -> int:
        return t // 2 // 2


@dataclass
class StageParams:
    weight: Tensor
    bias: Tensor


@dataclass
class STStageParams:
    corr: CorrelationParams
    ident: IdentificationParams
    tattn: TemporalAttentionParams


@dataclass
class LstmDirectionParams:
    """Input/recurrent projections and bias, gate order (input, forget, cell, output)."""

    w_x: Tensor
    w_h: Tensor
    bias: Tensor


@dataclass
class HeadParams:
    conv1_weight: Tensor
    conv1_bias: Tensor
    conv2_weight: Tensor
    conv2_bias: Tensor
    lstm: tuple  # ((fwd, bwd) per layer)
    cls_weight: Tensor
    cls_bias: Tensor


@dataclass
class ModelParams:
    stages: tuple
    st_stages: tuple
    head: HeadParams

    def flat(self) -> dict:
        """Stable name -> tensor mapping used by tape, optimizer, checkpoints."""
        out = {}
        for i, stage in enumerate(self.stages, start=1):
            out[f"stage{i}.weight"] = stage.weight
            out[f"stage{i}.bias"] = stage.bias
        for stage_no, st in zip((2, 3, 4), self.st_stages):
            out.update(st.corr.named_tensors(f"st{stage_no}.corr."))
            out.update(st.ident.named_tensors(f"st{stage_no}.ident."))
            out.update(st.tattn.named_tensors(f"st{stage_no}.tattn."))
        head = self.head
        out["head.conv1.weight"] = head.conv1_weight
        out["head.conv1.bias"] = head.conv1_bias
        out["head.conv2.weight"] = head.conv2_weight
        out["head.conv2.bias"] = head.conv2_bias
        for layer_no, (fwd, bwd) in enumerate(head.lstm):
            for tag, direction in (("fwd", fwd), ("bwd", bwd)):
                base = f"head.lstm.l{layer_no}.{tag}"
                out[f"{base}.w_x"] = direction.w_x
                out[f"{base}.w_h"] = direction.w_h
                out[f"{base}.bias"] = direction.bias
        out["head.classifier.weight"] = head.cls_weight
        out["head.classifier.bias"] = head.cls_bias
        return out


def _rng(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, "init", name))


def _lstm_direction(rng, in_dim: int, hidden: int, dtype) -> LstmDirectionParams:
    bias = np.zeros(4 * hidden)
    bias[hidden:2 * hidden] = 1.0  # forget-gate bias opens the memory path
    return LstmDirectionParams(
        w_x=parameter(rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=(in_dim, 4 * hidden)),
                      dtype=dtype),
        w_h=parameter(rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(hidden, 4 * hidden)),
                      dtype=dtype),
        bias=parameter(bias, dtype=dtype),
    )


def init_model_params(config: ModelConfig, seed: int, dtype=np.float32) -> ModelParams:
    stages = []
    in_c = config.in_channels
    for i, out_c in enumerate(config.stage_channels, start=1):
        rng = _rng(seed, f"stage{i}")
        fan_in = in_c * 9
        stages.append(StageParams(
            weight=parameter(rng.normal(0.0, 1.0 / np.sqrt(fan_in),
                                        size=(out_c, in_c, 1, 3, 3)), dtype=dtype),
            bias=parameter(np.zeros(out_c), dtype=dtype),
        ))
        in_c = out_c

    st_stages = ()
    if config.with_st_stages:
        built = []
        for stage_no, window in zip((2, 3, 4), config.windows):
            channels = config.stage_channels[stage_no - 1]
            built.append(STStageParams(
                corr=init_correlation_params(
                    channels, window, _rng(seed, f"st{stage_no}.corr"), dtype=dtype),
                ident=init_identification_params(
                    channels, _rng(seed, f"st{stage_no}.ident"),
                    reduction=config.reduction, dtype=dtype),
                tattn=init_temporal_attention_params(
                    channels, _rng(seed, f"st{stage_no}.tattn"),
                    reduction=config.reduction, dtype=dtype),
            ))
        st_stages = tuple(built)

    d = config.feature_dim
    hidden = config.hidden
    conv_rng = _rng(seed, "head.conv")
    lstm_layers = []
    for layer_no in range(2):
        in_dim = d if layer_no == 0 else 2 * hidden
        fwd = _lstm_direction(_rng(seed, f"head.lstm.l{layer_no}.fwd"), in_dim, hidden, dtype)
        bwd = _lstm_direction(_rng(seed, f"head.lstm.l{layer_no}.bwd"), in_dim, hidden, dtype)
        lstm_layers.append((fwd, bwd))
    cls_rng = _rng(seed, "head.classifier")
    head = HeadParams(
        conv1_weight=parameter(conv_rng.normal(0.0, 1.0 / np.sqrt(5 * d), size=(d, d, 5)),
                               dtype=dtype),
        conv1_bias=parameter(np.zeros(d), dtype=dtype),
        conv2_weight=parameter(conv_rng.normal(0.0, 1.0 / np.sqrt(5 * d), size=(d, d, 5)),
                               dtype=dtype),
        conv2_bias=parameter(np.zeros(d), dtype=dtype),
        lstm=tuple(lstm_layers),
        cls_weight=parameter(cls_rng.normal(0.0, 1.0 / np.sqrt(2 * hidden),
                                            size=(2 * hidden, config.vocab_size + 1)),
                             dtype=dtype),
        cls_bias=parameter(np.zeros(config.vocab_size + 1), dtype=dtype),
    )
    return ModelParams(stages=tuple(stages), st_stages=st_stages, head=head)


_STAGE_SPEC = ConvSpec((1, 3, 3), stride=(1, 2, 2))


def feature_extractor_forward(video: Tensor, config: ModelConfig,
                              params: ModelParams) -> Tensor:
    """Per-frame staged CNN with spatial-temporal stages after stages 2-4.

    video is (T, in_channels, H0, W0); returns (T, feature_dim). Raises
    FloatingPointError on non-finite activations (training divergence signal).
    """
    if video.ndim != 4 or video.shape[1] != config.in_channels:
        raise ValueError(f"expected (T, {config.in_channels}, H, W), got {video.shape}")
    if video.shape[2] != config.input_size or video.shape[3] != config.input_size:
        raise ValueError(
            f"expected {config.input_size}x{config.input_size} frames, got {video.shape}")
    x = video
    for i, stage in enumerate(params.stages, start=1):
        x = tt.relu(conv_nd(x, stage.weight, _STAGE_SPEC, bias=stage.bias))
        if config.with_st_stages and i >= 2:
            st = params.st_stages[i - 2]
            summary = correlation_forward(x, config.windows[i - 2], st.corr)
            x = identification_forward(x, summary, st.ident)
            x = temporal_attention_forward(x, st.tattn)
    features = tt.reshape(pool_spatial(x, "avg"), (x.shape[0], x.shape[1]))
    if not np.isfinite(features.data).all():
        raise FloatingPointError("non-finite activations in the feature extractor")
    return features


def _lstm_direction_forward(seq: Tensor, p: LstmDirectionParams, reverse: bool) -> Tensor:
    t_len = seq.shape[0]
    hidden = p.w_h.shape[0]
    dtype = seq.data.dtype
    h = parameter(np.zeros((1, hidden)), dtype=dtype)
    c = parameter(np.zeros((1, hidden)), dtype=dtype)
    order = range(t_len - 1, -1, -1) if reverse else range(t_len)
    outputs = [None] * t_len
    for t in order:
        x_t = tt.slice_axis(seq, 0, t, t + 1)
        gates = tt.add_rowwise(tt.matmul(x_t, p.w_x) + tt.matmul(h, p.w_h), p.bias)
        i_g = tt.sigmoid(tt.slice_axis(gates, 1, 0, hidden))
        f_g = tt.sigmoid(tt.slice_axis(gates, 1, hidden, 2 * hidden))
        g_g = tt.tanh(tt.slice_axis(gates, 1, 2 * hidden, 3 * hidden))
        o_g = tt.sigmoid(tt.slice_axis(gates, 1, 3 * hidden, 4 * hidden))
        c = f_g * c + i_g * g_g
        h = o_g * tt.tanh(c)
        outputs[t] = h
    return tt.concat(outputs, axis=0)


def temporal_head_forward(v: Tensor, head: HeadParams) -> Tensor:
    """1D conv/pool pyramid, two BiLSTM layers, linear classifier.

    v is (T, d) with T >= 4; logits come back as (T // 4, vocab + 1).
    """
    if v.ndim != 2:
        raise ValueError(f"expected (T, d) features, got {v.shape}")
    if v.shape[0] < 4:
        raise ValueError(f"need at least 4 frames for the pooling pyramid, got {v.shape[0]}")
    h = tt.relu(conv_nd(v, head.conv1_weight, ConvSpec((5,)), bias=head.conv1_bias))
    h = pool_frames_max(h)
    h = tt.relu(conv_nd(h, head.conv2_weight, ConvSpec((5,)), bias=head.conv2_bias))
    h = pool_frames_max(h)
    for fwd, bwd in head.lstm:
        h = tt.concat([
            _lstm_direction_forward(h, fwd, reverse=False),
            _lstm_direction_forward(h, bwd, reverse=True),
        ], axis=1)
    return tt.add_rowwise(tt.matmul(h, head.cls_weight), head.cls_bias)


def model_forward(video: Tensor, config: ModelConfig, params: ModelParams) -> Tensor:
    """Video in, CTC logits out."""
    return temporal_head_forward(feature_extractor_forward(video, config, params),
                                 params.head)
