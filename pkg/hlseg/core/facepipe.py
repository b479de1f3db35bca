"""Facial-region extraction and hair recolouring on top of a probability map.

The face chain thresholds the face class, erodes the binary mask, smooths its
edges with a bilateral pass on the 0/255 scale and keeps the image pixels where
the smoothed mask stays above half scale. Images are float (H, W, 3) arrays on
the [0, 255] scale; masks are float (H, W, 1) arrays of 0.0 / 1.0.
"""
import logging
import math
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .. import config
from .base import Box, StructElement, Tensor
from .errors import ParameterError, ShapeError

logger = logging.getLogger(__name__)

_LUMA = np.array([0.299, 0.587, 0.114])


def expand_roi(box: Box, factor: float, bounds: Tuple[int, int]) -> Box:
    """Grow ``box`` by ``factor`` in both directions around its centre, clamped to (W, H)."""
    if factor < 0:
        raise ParameterError(f"ROI factor must be >= 0, got {factor}")
    width, height = bounds
    nw = int(math.floor(box.w * (1 + factor) + 0.5))
    nh = int(math.floor(box.h * (1 + factor) + 0.5))
    x0 = int(math.floor(box.x + box.w / 2 - nw / 2 + 0.5))
    y0 = int(math.floor(box.y + box.h / 2 - nh / 2 + 0.5))
    x1, y1 = min(width, x0 + nw), min(height, y0 + nh)
    x0, y0 = max(0, x0), max(0, y0)
    if x1 <= x0 or y1 <= y0:
        raise ParameterError(f"{box} lies outside the {width}x{height} image")
    return Box(x0, y0, x1 - x0, y1 - y0)


def _binary(mask, name: str) -> Tuple[np.ndarray, bool]:
    m = np.asarray(mask)
    keep_channel = m.ndim == 3
    if keep_channel:
        if m.shape[2] != 1:
            raise ShapeError(f"{name} must be (H, W) or (H, W, 1), got {m.shape}")
        m = m[:, :, 0]
    if m.ndim != 2:
        raise ShapeError(f"{name} must be (H, W) or (H, W, 1), got {m.shape}")
    if not np.isin(m, (0, 1)).all():
        raise ParameterError(f"{name} must contain only 0 and 1")
    return m.astype(bool), keep_channel


def _restore(m: np.ndarray, keep_channel: bool) -> np.ndarray:
    out = m.astype(np.float32)
    return out[:, :, None] if keep_channel else out


def erode(mask, se: Optional[StructElement] = None) -> np.ndarray:
    """Binary erosion; pixels outside the image count as foreground."""
    se = se or StructElement.square(config.ERODE_SIZE)
    m, keep = _binary(mask, "erode input")
    return _restore(ndimage.binary_erosion(m, structure=se.matrix, border_value=1), keep)


def dilate(mask, se: Optional[StructElement] = None) -> np.ndarray:
    se = se or StructElement.square(config.ERODE_SIZE)
    m, keep = _binary(mask, "dilate input")
    return _restore(ndimage.binary_dilation(m, structure=se.matrix, border_value=0), keep)


def _spatial_kernel(d: int, sigma_space: float) -> np.ndarray:
    r = d // 2
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return np.exp(-(yy ** 2 + xx ** 2) / (2.0 * sigma_space ** 2))


def _check_window(d: int, *sigmas: float) -> None:
    if d < 3 or d % 2 == 0:
        raise ParameterError(f"filter diameter must be odd and >= 3, got {d}")
    if any(not s > 0 for s in sigmas):
        raise ParameterError(f"filter sigmas must be > 0, got {sigmas}")


def _planes(img) -> Tuple[np.ndarray, bool]:
    x = np.asarray(img, dtype=np.float64)
    if x.ndim == 2:
        return x[:, :, None], True
    if x.ndim != 3:
        raise ShapeError(f"image must be (H, W) or (H, W, C), got {x.shape}")
    return x, False


def gaussian_blur(img, d: int = config.BILATERAL_D,
                  sigma_space: float = config.BILATERAL_SIGMA_SPACE) -> np.ndarray:
    """Normalized d x d Gaussian with mirrored borders (same window as ``bilateral_filter``)."""
    _check_window(d, sigma_space)
    x, flat = _planes(img)
    kernel = _spatial_kernel(d, sigma_space)
    kernel /= kernel.sum()
    out = np.stack([ndimage.correlate(x[:, :, c], kernel, mode="mirror")
                    for c in range(x.shape[2])], axis=2)
    return (out[:, :, 0] if flat else out).astype(np.float32)


def bilateral_filter(img, d: int = config.BILATERAL_D,
                     sigma_color: float = config.BILATERAL_SIGMA_COLOR,
                     sigma_space: float = config.BILATERAL_SIGMA_SPACE) -> np.ndarray:
    """
    Bilateral filter over a d x d window

    Weights are a spatial Gaussian times a Gaussian of the Euclidean colour
    distance to the centre pixel, normalized per pixel. Borders are mirrored.

    Args:
        img: (H, W) or (H, W, C) array
        d: Window diameter, odd and >= 3
        sigma_color: Range sigma, in the image's intensity units
        sigma_space: Spatial sigma in pixels

    Returns:
        float32 array shaped like ``img``
    """
    _check_window(d, sigma_color, sigma_space)
    x, flat = _planes(img)
    h, w, _ = x.shape
    r = d // 2
    padded = np.pad(x, ((r, r), (r, r), (0, 0)), mode="reflect")
    spatial = _spatial_kernel(d, sigma_space)
    acc = np.zeros_like(x)
    norm = np.zeros((h, w, 1))
    for dy in range(d):
        for dx in range(d):
            shifted = padded[dy:dy + h, dx:dx + w]
            dist2 = ((shifted - x) ** 2).sum(axis=2, keepdims=True)
            weight = spatial[dy, dx] * np.exp(-dist2 / (2.0 * sigma_color ** 2))
            acc += weight * shifted
            norm += weight
    out = acc / norm
    return (out[:, :, 0] if flat else out).astype(np.float32)


def face_mask(prob: Tensor, class_id: int = config.FACE, threshold: float = config.MASK_THRESHOLD,
              se: Optional[StructElement] = None, d: int = config.BILATERAL_D,
              sigma_color: float = config.BILATERAL_SIGMA_COLOR,
              sigma_space: float = config.BILATERAL_SIGMA_SPACE) -> np.ndarray:
    """Threshold, erode and edge-smooth one class of ``prob``; returns a 0/1 (H, W, 1) mask."""
    prob = np.asarray(prob, dtype=np.float32)
    if prob.ndim != 3 or not 0 <= class_id < prob.shape[2]:
        raise ParameterError(f"class id {class_id} not available in probability map {prob.shape}")
    m = (prob[:, :, class_id] > threshold).astype(np.float32)
    p = erode(m, se)
    q = bilateral_filter(p * 255.0, d, sigma_color, sigma_space)
    kept = q > 127.5
    logger.debug("face mask: %d thresholded, %d eroded, %d kept", int(m.sum()), int(p.sum()), int(kept.sum()))
    return kept.astype(np.float32)[:, :, None]


def extract_face_region(image: Tensor, prob: Tensor, **mask_options) -> np.ndarray:
    """Image pixels inside the smoothed face mask; every other pixel is exactly 0."""
    img = np.asarray(image, dtype=np.float32)
    if img.ndim != 3 or img.shape[:2] != np.shape(prob)[:2]:
        raise ShapeError(f"image {img.shape} does not match probability map {np.shape(prob)}")
    return img * face_mask(prob, **mask_options)


def _recolor(image: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Target hue and chroma at each pixel's own luma, chroma scaled down to stay in gamut."""
    y = (image @ _LUMA)[:, :, None]
    chroma = target - target @ _LUMA
    with np.errstate(divide="ignore", invalid="ignore"):
        up = np.where(chroma > 0, (255.0 - y) / chroma, np.inf)
        down = np.where(chroma < 0, y / -chroma, np.inf)
    k = np.clip(np.minimum(up, down).min(axis=2, keepdims=True), 0.0, 1.0)
    return y + k * chroma


def dye_hair(image: Tensor, alpha: Tensor, target_color: Sequence[float],
             strength: float = 1.0) -> np.ndarray:
    """Blend a luma-preserving recolour of ``image`` into it, weighted by strength * alpha."""
    target = np.asarray(target_color, dtype=np.float64).reshape(-1)
    if target.shape != (3,) or (target < 0).any() or (target > 255).any():
        raise ParameterError(f"target colour must be three values in [0, 255], got {target_color}")
    if not 0.0 <= strength <= 1.0:
        raise ParameterError(f"strength must be in [0, 1], got {strength}")
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeError(f"dye_hair expects (H, W, 3), got {img.shape}")
    a = np.asarray(alpha, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.shape != img.shape[:2] + (1,):
        raise ShapeError(f"alpha {a.shape} does not match image {img.shape}")
    weight = strength * np.clip(a, 0.0, 1.0)
    out = (1.0 - weight) * img + weight * _recolor(img, target)
    return np.clip(out, 0.0, 255.0).astype(np.float32)
