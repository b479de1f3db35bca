"""HLNet graph assembly and single-image forward inference.

The network is described once, declaratively, by ``layer_specs``: every
convolution the graph uses, with its weight-store name and kernel shape. That
list drives random initialisation, build-time validation, weight manifests and
the parameter count, so the four can never disagree.

Stages (input 224x224x3):

    stage1  Conv2D 3x3/2                     112x112x32
    stage2  depthwise 3x3/2 + pointwise 1x1   56x56x64
    stage3  depthwise 3x3/2 + pointwise 1x1   28x28x64
    stage4  InteractionModule(stage2, stage3) 28x28x64
    stage5  FFM(stage4, stage3)               28x28x64
    stage6  DilatedGroup                      28x28x32
    stage7  bilinear upsample x8             224x224x32
    stage8  Conv2D 1x1 classifier            224x224xK
    stage9  softmax                          224x224xK
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .. import config
from .base import BNParams, ConvParams, Tensor, as_tensor
from .errors import LoadError, ParameterError, ShapeError, expect_shape
from .modelio import WeightStore
from .nnops import (
    DilatedGroupParams, FFMParams, InteractionParams, InvertedResidualParams,
    bilinear_upsample, conv2d, dilated_group, ffm, fold_batchnorm, interaction_module,
    inverted_residual, relu, same_padding, softmax_channels,
)

logger = logging.getLogger(__name__)

BN_TENSORS = ("bn_gamma", "bn_beta", "bn_mean", "bn_var")
BN_EPSILON = 1e-5


@dataclass(frozen=True)
class HLNetConfig:
    num_classes: int = config.NUM_CLASSES
    input_size: int = config.INPUT_SIZE
    width_mult: float = 1.0
    expansion: int = config.EXPANSION_FACTOR
    dilation_rates: Tuple[int, ...] = config.DILATION_RATES
    ffm_reduction: int = config.FFM_REDUCTION
    use_interaction: bool = True
    use_dilated: bool = True

    def __post_init__(self):
        if self.num_classes < 2:
            raise ParameterError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.input_size < 8 or self.input_size % 8:
            raise ParameterError(f"input_size must be a positive multiple of 8, got {self.input_size}")
        if self.width_mult <= 0 or self.expansion < 1 or self.ffm_reduction < 1:
            raise ParameterError("width_mult, expansion and ffm_reduction must be positive")

    def width(self, channels: int) -> int:
        return max(1, int(round(channels * self.width_mult)))

    @property
    def rates(self) -> Tuple[int, ...]:
        # ablation baseline: plain 3x3 convs in place of the dilated ones
        return self.dilation_rates if self.use_dilated else (1,) * len(self.dilation_rates)


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kernel_shape: Tuple[int, int, int, int]
    stride: int = 1
    dilation: int = 1
    depthwise: bool = False
    has_bn: bool = True

    @property
    def out_channels(self) -> int:
        return self.kernel_shape[2] if self.depthwise else self.kernel_shape[3]

    def tensor_shapes(self) -> Dict[str, Tuple[int, ...]]:
        shapes = {f"{self.name}.kernel": self.kernel_shape, f"{self.name}.bias": (self.out_channels,)}
        if self.has_bn:
            for t in BN_TENSORS:
                shapes[f"{self.name}.{t}"] = (self.out_channels,)
        return shapes


def _inverted_residual_specs(prefix: str, channels: int, t: int) -> List[LayerSpec]:
    hidden = channels * t
    return [
        LayerSpec(f"{prefix}.expand", (1, 1, channels, hidden)),
        LayerSpec(f"{prefix}.depthwise", (3, 3, hidden, 1), depthwise=True),
        LayerSpec(f"{prefix}.project", (1, 1, hidden, channels)),
    ]


def layer_specs(cfg: HLNetConfig) -> List[LayerSpec]:
    c32, c64 = cfg.width(32), cfg.width(64)
    reduced = max(1, c64 // cfg.ffm_reduction)
    specs = [
        LayerSpec("stage1.conv", (3, 3, 3, c32), stride=2),
        LayerSpec("stage2.dw", (3, 3, c32, 1), stride=2, depthwise=True),
        LayerSpec("stage2.pw", (1, 1, c32, c64)),
        LayerSpec("stage3.dw", (3, 3, c64, 1), stride=2, depthwise=True),
        LayerSpec("stage3.pw", (1, 1, c64, c64)),
    ]
    if cfg.use_interaction:
        specs += _inverted_residual_specs("stage4.high_block", c64, cfg.expansion)
    specs += _inverted_residual_specs("stage4.low_block", c64, cfg.expansion)
    if cfg.use_interaction:
        specs += [
            LayerSpec("stage4.low_to_high", (1, 1, c64, c64)),
            LayerSpec("stage4.high_to_low", (1, 1, c64, c64), stride=2),
        ]
    specs += [
        LayerSpec("stage5.fuse", (3, 3, 2 * c64, c64)),
        LayerSpec("stage5.attn_reduce", (1, 1, c64, reduced), has_bn=False),
        LayerSpec("stage5.attn_expand", (1, 1, reduced, c64), has_bn=False),
    ]
    for i, rate in enumerate(cfg.rates):
        specs.append(LayerSpec(f"stage6.branch{i}", (3, 3, c64, c64), dilation=rate))
    specs += [
        LayerSpec("stage6.project", (1, 1, c64, c32)),
        LayerSpec("stage8.classifier", (1, 1, c32, cfg.num_classes), has_bn=False),
    ]
    return specs


def init_weights(cfg: Optional[HLNetConfig] = None, seed: int = config.SEED) -> WeightStore:
    """Random He-normal weights with near-identity BN statistics for every layer of ``cfg``."""
    cfg = cfg or HLNetConfig()
    rng = np.random.default_rng(seed)
    store = WeightStore()
    for spec in layer_specs(cfg):
        kh, kw, cin, cout = spec.kernel_shape
        fan_in = kh * kw * (1 if spec.depthwise else cin)
        n = spec.out_channels
        store[f"{spec.name}.kernel"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), spec.kernel_shape)
        store[f"{spec.name}.bias"] = np.zeros(n)
        if spec.has_bn:
            store[f"{spec.name}.bn_gamma"] = rng.uniform(0.8, 1.2, n)
            store[f"{spec.name}.bn_beta"] = rng.normal(0.0, 0.05, n)
            store[f"{spec.name}.bn_mean"] = rng.normal(0.0, 0.05, n)
            store[f"{spec.name}.bn_var"] = rng.uniform(0.8, 1.2, n)
    logger.debug("initialised %d tensors for %s", len(store), cfg)
    return store


def shape_trace(cfg: HLNetConfig) -> List[Tuple[str, Tuple[int, int, int]]]:
    """Symbolic output shape of every stage, without touching weights."""
    size = cfg.input_size
    c32, c64 = cfg.width(32), cfg.width(64)
    s1 = same_padding(size, 3, 2, 1)[0]
    s2 = same_padding(s1, 3, 2, 1)[0]
    s3 = same_padding(s2, 3, 2, 1)[0]
    k = cfg.num_classes
    return [
        ("input", (size, size, 3)),
        ("stage1", (s1, s1, c32)),
        ("stage2", (s2, s2, c64)),
        ("stage3", (s3, s3, c64)),
        ("stage4", (s3, s3, c64)),
        ("stage5", (s3, s3, c64)),
        ("stage6", (s3, s3, c32)),
        ("stage7", (size, size, c32)),
        ("stage8", (size, size, k)),
        ("stage9", (size, size, k)),
    ]


@dataclass(frozen=True)
class HLNetModel:
    cfg: HLNetConfig
    layers: Dict[str, ConvParams] = field(repr=False)

    @property
    def num_classes(self) -> int:
        return self.cfg.num_classes

    @property
    def input_size(self) -> int:
        return self.cfg.input_size

    def forward(self, image: Tensor, trace: Optional[list] = None) -> Tensor:
        return forward(self, image, trace)

    def _ir(self, prefix: str) -> InvertedResidualParams:
        return InvertedResidualParams(self.layers[f"{prefix}.expand"],
                                      self.layers[f"{prefix}.depthwise"],
                                      self.layers[f"{prefix}.project"])


def _bound_layer(weights: WeightStore, spec: LayerSpec) -> ConvParams:
    for name, shape in spec.tensor_shapes().items():
        if name not in weights:
            raise LoadError(f"weight store is missing {name} (layer {spec.name})")
        expect_shape(name, shape, weights[name].shape)
    p = ConvParams(kernel=weights[f"{spec.name}.kernel"], bias=weights[f"{spec.name}.bias"],
                   stride=spec.stride, dilation=spec.dilation, depthwise=spec.depthwise)
    if spec.has_bn:
        bn = BNParams(*(weights[f"{spec.name}.{t}"] for t in BN_TENSORS), epsilon=BN_EPSILON)
        p = fold_batchnorm(p, bn)
    return p


def build(weights: WeightStore, num_classes: int = config.NUM_CLASSES,
          cfg: Optional[HLNetConfig] = None) -> HLNetModel:
    """
    Bind a weight store to the HLNet graph, folding BN into every convolution

    Args:
        weights: Loaded WeightStore
        num_classes: Output classes; ignored when ``cfg`` is given
        cfg: Full architecture configuration

    Returns:
        Validated, immutable HLNetModel
    """
    cfg = cfg or HLNetConfig(num_classes=num_classes)
    layers = {spec.name: _bound_layer(weights, spec) for spec in layer_specs(cfg)}
    trace = shape_trace(cfg)
    if cfg == HLNetConfig() and trace != config.REFERENCE_TRACE:
        raise ShapeError(f"shape trace {trace} deviates from the reference architecture")
    extra = set(weights.names()) - {n for s in layer_specs(cfg) for n in s.tensor_shapes()}
    if extra:
        logger.warning("ignoring %d unused tensors, e.g. %s", len(extra), sorted(extra)[0])
    logger.info("built HLNet (%d layers, %d classes)", len(layers), cfg.num_classes)
    return HLNetModel(cfg=cfg, layers=layers)


def forward(model: HLNetModel, image: Tensor, trace: Optional[list] = None) -> Tensor:
    """
    Run the network on one normalised image

    Args:
        model: Built HLNetModel
        image: (input_size, input_size, 3) array with values in [0, 1]
        trace: Optional list that receives (stage, shape) pairs

    Returns:
        ProbMap of shape (input_size, input_size, num_classes)
    """
    x = as_tensor(image, "image")
    size = model.input_size
    expect_shape("image", (size, size, 3), x.shape)
    L = model.layers

    def record(stage, t):
        if trace is not None:
            trace.append((stage, tuple(t.shape)))
        return t

    record("input", x)
    s1 = record("stage1", relu(conv2d(x, L["stage1.conv"])))
    s2 = record("stage2", relu(conv2d(relu(conv2d(s1, L["stage2.dw"])), L["stage2.pw"])))
    s3 = record("stage3", relu(conv2d(relu(conv2d(s2, L["stage3.dw"])), L["stage3.pw"])))
    if model.cfg.use_interaction:
        params = InteractionParams(L["stage4.low_to_high"], L["stage4.high_to_low"],
                                   high_block=model._ir("stage4.high_block"),
                                   low_block=model._ir("stage4.low_block"))
        s4 = interaction_module(s2, s3, params)
    else:
        s4 = inverted_residual(s3, model._ir("stage4.low_block"))
    record("stage4", s4)
    s5 = record("stage5", ffm(s4, s3, FFMParams(L["stage5.fuse"], L["stage5.attn_reduce"],
                                                L["stage5.attn_expand"])))
    branches = tuple(L[f"stage6.branch{i}"] for i in range(len(model.cfg.rates)))
    s6 = record("stage6", relu(dilated_group(s5, DilatedGroupParams(branches, L["stage6.project"]))))
    s7 = record("stage7", bilinear_upsample(s6, size, size))
    s8 = record("stage8", conv2d(s7, L["stage8.classifier"]))
    return record("stage9", softmax_channels(s8))


def param_count(model: HLNetModel) -> int:
    """Scalar weights of the folded model (kernels plus biases)."""
    return sum(p.size for p in model.layers.values())
