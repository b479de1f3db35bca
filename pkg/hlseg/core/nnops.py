"""Neural operators for single-image, channel-last inference.

All operators take and return float32 (H, W, C) arrays and never mutate their
inputs, so one set of weights can serve any number of threads. Batch norm is
folded into the preceding convolution at load time (``fold_batchnorm``); there
is no BN operator on the inference path.

Convolutions are computed im2col style: the dilated/strided taps of the padded
input are stacked along the channel axis and contracted with the reshaped
kernel in one matrix product. ``conv2d_naive`` and ``depthwise_conv2d_naive``
are the literal loop definitions kept as reference oracles.
"""
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .base import BNParams, ConvParams, Padding, Tensor, as_tensor
from .errors import ParameterError, ShapeError


def same_padding(size: int, k: int, stride: int, dilation: int) -> Tuple[int, int, int]:
    """Return (out_size, pad_before, pad_after) for "same" padding; the odd pixel goes after."""
    k_eff = dilation * (k - 1) + 1
    out = math.ceil(size / stride)
    total = max((out - 1) * stride + k_eff - size, 0)
    return out, total // 2, total - total // 2


def _output_geometry(h: int, w: int, p: ConvParams):
    kh, kw = p.kernel.shape[:2]
    if p.padding is Padding.SAME:
        ho, top, bottom = same_padding(h, kh, p.stride, p.dilation)
        wo, left, right = same_padding(w, kw, p.stride, p.dilation)
    else:
        ho = (h - (p.dilation * (kh - 1) + 1)) // p.stride + 1
        wo = (w - (p.dilation * (kw - 1) + 1)) // p.stride + 1
        top = bottom = left = right = 0
        if ho < 1 or wo < 1:
            raise ShapeError(f"input {h}x{w} smaller than dilated kernel {kh}x{kw} (valid padding)")
    return ho, wo, (top, bottom), (left, right)


def _taps(x: np.ndarray, p: ConvParams):
    """Yield (i, j, strided window) for every kernel tap over the zero-padded input."""
    h, w, _ = x.shape
    kh, kw = p.kernel.shape[:2]
    ho, wo, pad_h, pad_w = _output_geometry(h, w, p)
    if any(pad_h) or any(pad_w):
        x = np.pad(x, (pad_h, pad_w, (0, 0)))
    s, d = p.stride, p.dilation
    for i in range(kh):
        for j in range(kw):
            y0, x0 = i * d, j * d
            yield i, j, x[y0:y0 + (ho - 1) * s + 1:s, x0:x0 + (wo - 1) * s + 1:s, :]


def conv2d(input: Tensor, p: ConvParams) -> Tensor:
    x = as_tensor(input, "conv2d input")
    if p.depthwise:
        return depthwise_conv2d(x, p)
    if x.shape[2] != p.in_channels:
        raise ShapeError(f"conv2d input has {x.shape[2]} channels, kernel expects {p.in_channels}")
    kh, kw, cin, cout = p.kernel.shape
    if kh == 1 and kw == 1 and p.stride == 1:
        out = x.reshape(-1, cin) @ p.kernel.reshape(cin, cout)
        return (out + p.bias).reshape(x.shape[0], x.shape[1], cout)
    windows = [win for _, _, win in _taps(x, p)]
    cols = windows[0] if len(windows) == 1 else np.concatenate(windows, axis=2)
    ho, wo = cols.shape[:2]
    out = cols.reshape(ho * wo, -1) @ p.kernel.reshape(kh * kw * cin, cout)
    return (out + p.bias).reshape(ho, wo, cout)


def depthwise_conv2d(input: Tensor, p: ConvParams) -> Tensor:
    x = as_tensor(input, "depthwise_conv2d input")
    kh, kw, cin, mult = p.kernel.shape
    if mult != 1:
        raise ParameterError(f"depthwise kernel must have multiplier 1, got shape {p.kernel.shape}")
    if x.shape[2] != cin:
        raise ShapeError(f"depthwise_conv2d input has {x.shape[2]} channels, kernel expects {cin}")
    out = None
    for i, j, win in _taps(x, p):
        term = win * p.kernel[i, j, :, 0]
        out = term if out is None else out + term
    return (out + p.bias).astype(np.float32, copy=False)


def conv2d_naive(input: np.ndarray, p: ConvParams) -> np.ndarray:
    """Direct six-loop convolution in float64; reference for ``conv2d``."""
    x = np.asarray(input, dtype=np.float64)
    if p.depthwise:
        return depthwise_conv2d_naive(x, p)
    h, w, cin = x.shape
    if cin != p.in_channels:
        raise ShapeError(f"conv2d input has {cin} channels, kernel expects {p.in_channels}")
    kh, kw, _, cout = p.kernel.shape
    ho, wo, (top, _), (left, _) = _output_geometry(h, w, p)
    kernel = p.kernel.astype(np.float64)
    out = np.zeros((ho, wo, cout))
    for oy in range(ho):
        for ox in range(wo):
            for co in range(cout):
                acc = float(p.bias[co])
                for i in range(kh):
                    for j in range(kw):
                        iy = oy * p.stride + i * p.dilation - top
                        ix = ox * p.stride + j * p.dilation - left
                        if 0 <= iy < h and 0 <= ix < w:
                            for ci in range(cin):
                                acc += x[iy, ix, ci] * kernel[i, j, ci, co]
                out[oy, ox, co] = acc
    return out


def depthwise_conv2d_naive(input: np.ndarray, p: ConvParams) -> np.ndarray:
    x = np.asarray(input, dtype=np.float64)
    h, w, cin = x.shape
    kh, kw = p.kernel.shape[:2]
    ho, wo, (top, _), (left, _) = _output_geometry(h, w, p)
    out = np.zeros((ho, wo, cin))
    for c in range(cin):
        for oy in range(ho):
            for ox in range(wo):
                acc = float(p.bias[c])
                for i in range(kh):
                    for j in range(kw):
                        iy = oy * p.stride + i * p.dilation - top
                        ix = ox * p.stride + j * p.dilation - left
                        if 0 <= iy < h and 0 <= ix < w:
                            acc += x[iy, ix, c] * float(p.kernel[i, j, c, 0])
                out[oy, ox, c] = acc
    return out


def bn_apply(y: np.ndarray, bn: BNParams) -> np.ndarray:
    scale = bn.gamma / np.sqrt(bn.running_var + bn.epsilon)
    return (np.asarray(y, dtype=np.float64) - bn.running_mean) * scale + bn.beta


def fold_batchnorm(p: ConvParams, bn: BNParams) -> ConvParams:
    """Fold inference-time batch norm into the convolution's kernel and bias."""
    if len(bn) != p.out_channels:
        raise ParameterError(f"BN length {len(bn)} != conv out channels {p.out_channels}")
    scale = bn.gamma / np.sqrt(bn.running_var + bn.epsilon)
    kernel = p.kernel.astype(np.float64)
    if p.depthwise:
        kernel = kernel * scale[None, None, :, None]
    else:
        kernel = kernel * scale[None, None, None, :]
    bias = (p.bias.astype(np.float64) - bn.running_mean) * scale + bn.beta
    return ConvParams(kernel=kernel, bias=bias, stride=p.stride, dilation=p.dilation,
                      padding=p.padding, depthwise=p.depthwise)


def relu(input: Tensor) -> Tensor:
    return np.maximum(input, 0).astype(np.float32, copy=False)


def sigmoid(input: Tensor) -> Tensor:
    """Logistic function, strictly inside (0, 1) in float32."""
    x = np.asarray(input, dtype=np.float64)
    # tanh form never overflows
    y = (0.5 * (1.0 + np.tanh(0.5 * x))).astype(np.float32)
    return np.clip(y, np.finfo(np.float32).tiny, np.nextafter(np.float32(1), np.float32(0)))


def resize_bilinear(input: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear resize with align_corners=False (half-pixel centres), edge-clamped."""
    x = np.asarray(input, dtype=np.float32)
    if out_h < 1 or out_w < 1:
        raise ParameterError(f"output dims must be positive, got {out_h}x{out_w}")
    h, w = x.shape[:2]
    if (h, w) == (out_h, out_w):
        return x.copy()
    y0, y1, fy = _interp_axis(h, out_h)
    x0, x1, fx = _interp_axis(w, out_w)
    fy = fy[:, None, None]
    rows = x[y0] * (1 - fy) + x[y1] * fy
    fx = fx[None, :, None]
    return (rows[:, x0] * (1 - fx) + rows[:, x1] * fx).astype(np.float32)


def _interp_axis(n_in: int, n_out: int):
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0, n_in - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, (src - i0).astype(np.float32)


def bilinear_upsample(input: Tensor, out_h: int, out_w: int) -> Tensor:
    x = as_tensor(input, "bilinear_upsample input")
    if out_h < 1 or out_w < 1:
        raise ParameterError(f"output dims must be positive, got {out_h}x{out_w}")
    if out_h < x.shape[0] or out_w < x.shape[1]:
        raise ParameterError(f"cannot upsample {x.shape[:2]} to smaller {out_h}x{out_w}")
    return resize_bilinear(x, out_h, out_w)


def global_avg_pool(input: Tensor) -> Tensor:
    x = as_tensor(input, "global_avg_pool input")
    return x.mean(axis=(0, 1), dtype=np.float64).astype(np.float32).reshape(1, 1, -1)


def softmax_channels(input: Tensor) -> Tensor:
    x = np.asarray(input, dtype=np.float32)
    e = np.exp(x - x.max(axis=2, keepdims=True))
    return (e / e.sum(axis=2, keepdims=True)).astype(np.float32)


@dataclass(frozen=True)
class InvertedResidualParams:
    expand: ConvParams
    depthwise: ConvParams
    project: ConvParams

    @property
    def stride(self) -> int:
        return self.depthwise.stride


def inverted_residual(input: Tensor, params: InvertedResidualParams) -> Tensor:
    """Expand 1x1 (ReLU) -> depthwise 3x3 (ReLU) -> linear project 1x1, shortcut at stride 1."""
    if params.stride not in (1, 2):
        raise ParameterError(f"inverted residual stride must be 1 or 2, got {params.stride}")
    x = as_tensor(input, "inverted_residual input")
    hidden = relu(conv2d(x, params.expand))
    hidden = relu(depthwise_conv2d(hidden, params.depthwise))
    out = conv2d(hidden, params.project)
    if params.stride == 1 and out.shape == x.shape:
        out = out + x
    return out


@dataclass(frozen=True)
class FFMParams:
    fuse: ConvParams     # 3x3 over concat(a, b), BN folded
    reduce: ConvParams   # 1x1, C -> C / reduction
    expand: ConvParams   # 1x1, C / reduction -> C


def ffm_attention(f: Tensor, params: FFMParams) -> Tensor:
    squeeze = global_avg_pool(f)
    return sigmoid(conv2d(relu(conv2d(squeeze, params.reduce)), params.expand))


def ffm(a: Tensor, b: Tensor, params: FFMParams) -> Tensor:
    a = as_tensor(a, "ffm input a")
    b = as_tensor(b, "ffm input b")
    if a.shape[:2] != b.shape[:2]:
        raise ShapeError(f"ffm inputs differ spatially: {a.shape[:2]} vs {b.shape[:2]}")
    f = relu(conv2d(np.concatenate([a, b], axis=2), params.fuse))
    return f + f * ffm_attention(f, params)


@dataclass(frozen=True)
class DilatedGroupParams:
    branches: Tuple[ConvParams, ...]  # parallel 3x3 convs, one per dilation rate
    project: ConvParams               # 1x1 projection


def dilated_group(input: Tensor, params: DilatedGroupParams) -> Tensor:
    x = as_tensor(input, "dilated_group input")
    total = None
    for branch in params.branches:
        y = conv2d(x, branch)
        if total is not None and y.shape != total.shape:
            raise ShapeError(f"dilated branches disagree: {y.shape} vs {total.shape}")
        total = y if total is None else total + y
    return conv2d(total, params.project)


@dataclass(frozen=True)
class InteractionParams:
    low_to_high: ConvParams   # 1x1 on the low branch, then upsampled to high resolution
    high_to_low: ConvParams   # 1x1 with stride 2 on the updated high branch
    high_block: Optional[InvertedResidualParams] = None
    low_block: Optional[InvertedResidualParams] = None


def interaction_module(high: Tensor, low: Tensor, params: InteractionParams) -> Tensor:
    """Exchange information between a branch and its half-resolution sibling; returns the fused low branch."""
    high = as_tensor(high, "interaction high branch")
    low = as_tensor(low, "interaction low branch")
    if high.shape[0] != 2 * low.shape[0] or high.shape[1] != 2 * low.shape[1]:
        raise ShapeError(f"high branch {high.shape[:2]} must be exactly 2x low branch {low.shape[:2]}")
    if params.high_block is not None:
        high = inverted_residual(high, params.high_block)
    if params.low_block is not None:
        low = inverted_residual(low, params.low_block)
    up = bilinear_upsample(conv2d(low, params.low_to_high), high.shape[0], high.shape[1])
    high = high + up
    return low + conv2d(high, params.high_to_low)
