"""Guided-filter refinement of soft segmentation masks.

The filter fits ``Q = a * I + b`` in every (2r+1)^2 window of the guide ``I``
and averages the coefficients of all windows covering a pixel. Window means
come from integral images over an edge-replicated border, so every pixel sees a
full window and the cost does not depend on ``r``. The fast variant fits the
coefficients on a 1/s resampled copy and upsamples them before applying them
to the full-resolution guide.

All statistics are accumulated in float64; results are returned as float32.
"""
import logging

import numpy as np

from .. import config
from .base import GFParams, Tensor
from .errors import ParameterError, ShapeError
from .nnops import resize_bilinear

logger = logging.getLogger(__name__)


def _as_plane(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] != 1:
        raise ShapeError(f"{name} must be (H, W, 1), got {arr.shape}")
    return arr


def box_filter(x: np.ndarray, r: int) -> np.ndarray:
    """Mean over the (2r+1)^2 window around each pixel, edges replicated."""
    if r < 0:
        raise ParameterError(f"box radius must be >= 0, got {r}")
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[:, :, None]
    h, w = x.shape[:2]
    k = 2 * r + 1
    padded = np.pad(x, ((r, r), (r, r), (0, 0)), mode="edge")
    sat = np.zeros((h + k, w + k, x.shape[2]), dtype=np.float64)
    sat[1:, 1:] = padded.cumsum(axis=0).cumsum(axis=1)
    total = sat[k:, k:] - sat[:h, k:] - sat[k:, :w] + sat[:h, :w]
    out = total / (k * k)
    return out[:, :, 0] if squeeze else out


def luma(image: Tensor) -> np.ndarray:
    """BT.601 luma (H, W, 1) of an RGB image, same intensity scale as the input."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeError(f"luma expects (H, W, 3), got {img.shape}")
    return (img @ np.array([0.299, 0.587, 0.114]))[:, :, None]


def _coefficients(I: np.ndarray, P: np.ndarray, r: int, eps: float):
    mean_i = box_filter(I, r)
    mean_p = box_filter(P, r)
    cov_ip = box_filter(I * P, r) - mean_i * mean_p
    var_i = box_filter(I * I, r) - mean_i * mean_i
    a = cov_ip / (var_i + eps)
    b = mean_p - a * mean_i
    return a, b


def _check(I: np.ndarray, P: np.ndarray, r: int, eps: float) -> None:
    if I.shape != P.shape:
        raise ShapeError(f"guide {I.shape[:2]} and input {P.shape[:2]} differ in size")
    if r < 1:
        raise ParameterError(f"guided filter radius must be >= 1, got {r}")
    if not eps > 0:
        raise ParameterError(f"guided filter eps must be > 0, got {eps}")


def guided_filter(I: Tensor, P: Tensor, r: int = config.GF_RADIUS,
                  eps: float = config.GF_EPS) -> Tensor:
    I, P = _as_plane(I, "guide"), _as_plane(P, "filter input")
    _check(I, P, r, eps)
    a, b = _coefficients(I, P, r, eps)
    return (box_filter(a, r) * I + box_filter(b, r)).astype(np.float32)


def guided_filter_naive(I: Tensor, P: Tensor, r: int, eps: float) -> np.ndarray:
    """Per-pixel windowed least squares with clamped window indices."""
    I, P = _as_plane(I, "guide")[:, :, 0], _as_plane(P, "filter input")[:, :, 0]
    h, w = I.shape
    offsets = np.arange(-r, r + 1)

    def window(arr, y, x):
        ys = np.clip(y + offsets, 0, h - 1)
        xs = np.clip(x + offsets, 0, w - 1)
        return arr[np.ix_(ys, xs)]

    a = np.empty((h, w))
    b = np.empty((h, w))
    for y in range(h):
        for x in range(w):
            wi, wp = window(I, y, x), window(P, y, x)
            mu, pbar = wi.mean(), wp.mean()
            a[y, x] = ((wi * wp).mean() - mu * pbar) / (((wi - mu) ** 2).mean() + eps)
            b[y, x] = pbar - a[y, x] * mu
    q = np.empty((h, w))
    for y in range(h):
        for x in range(w):
            q[y, x] = window(a, y, x).mean() * I[y, x] + window(b, y, x).mean()
    return q[:, :, None]


def fast_guided_filter(I: Tensor, P: Tensor, r: int = config.GF_RADIUS,
                       eps: float = config.GF_EPS, s: int = config.GF_SUBSAMPLE) -> Tensor:
    """
    Guided filter with coefficients fitted at 1/s resolution

    Args:
        I: Guide (H, W, 1), 8-bit intensity scale
        P: Filter input (H, W, 1)
        r: Window radius at full resolution; the subsampled fit uses max(1, round(r / s))
        eps: Regularization on the guide's squared intensity scale
        s: Subsample factor, s == 1 is the exact filter

    Returns:
        Filtered (H, W, 1) float32 array
    """
    if s < 1:
        raise ParameterError(f"subsample factor must be >= 1, got {s}")
    I, P = _as_plane(I, "guide"), _as_plane(P, "filter input")
    _check(I, P, r, eps)
    if s == 1:
        return guided_filter(I, P, r, eps)
    h, w = I.shape[:2]
    hs, ws = max(1, round(h / s)), max(1, round(w / s))
    rs = max(1, round(r / s))
    I_low = resize_bilinear(I, hs, ws).astype(np.float64)
    P_low = resize_bilinear(P, hs, ws).astype(np.float64)
    a, b = _coefficients(I_low, P_low, rs, eps)
    mean_a = resize_bilinear(box_filter(a, rs), h, w).astype(np.float64)
    mean_b = resize_bilinear(box_filter(b, rs), h, w).astype(np.float64)
    return (mean_a * I + mean_b).astype(np.float32)


def refine_mask(image_rgb: Tensor, prob: Tensor, class_id: int,
                params: GFParams = GFParams()) -> Tensor:
    """Alpha matte in [0, 1] for one class, guided by the image's luma."""
    prob = np.asarray(prob, dtype=np.float32)
    if prob.ndim != 3:
        raise ShapeError(f"probability map must be (H, W, K), got {prob.shape}")
    if not 0 <= class_id < prob.shape[2]:
        raise ParameterError(f"class id {class_id} outside [0, {prob.shape[2]})")
    guide = luma(image_rgb)
    if guide.shape[:2] != prob.shape[:2]:
        raise ShapeError(f"image {guide.shape[:2]} and probability map {prob.shape[:2]} differ in size")
    logger.debug("refining class %d with s=%d r=%d eps=%g", class_id, params.s, params.r, params.eps)
    q = fast_guided_filter(guide, prob[:, :, class_id:class_id + 1], params.r, params.eps, params.s)
    return np.clip(q, 0.0, 1.0)
