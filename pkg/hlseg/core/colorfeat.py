"""Colour-space conversion and masked colour features for skin-tone grading."""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .. import config
from .base import ColorSpace, Tensor
from .errors import DomainError, ParameterError, ShapeError
from .forest import Dataset

logger = logging.getLogger(__name__)

CHANNEL_NAMES = {
    ColorSpace.RGB: ("r", "g", "b"),
    ColorSpace.HSV: ("h", "s", "v"),
    ColorSpace.YCRCB: ("y", "cr", "cb"),
}

# Histogram range per channel
CHANNEL_RANGES = {
    ColorSpace.RGB: ((0.0, 256.0),) * 3,
    ColorSpace.HSV: ((0.0, 360.0), (0.0, 1.0), (0.0, 1.0)),
    ColorSpace.YCRCB: ((0.0, 256.0),) * 3,
}

FEATURE_METHODS = ("moments", "hist8", "hist256")

LABEL_COLUMN = "label"


def _rgb(image) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeError(f"colour image must be (H, W, 3), got {img.shape}")
    return img


def rgb_to_hsv(image: Tensor) -> np.ndarray:
    """H in degrees [0, 360), S and V in [0, 1]."""
    rgb = _rgb(image) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = rgb.max(axis=2)
    delta = mx - rgb.min(axis=2)
    safe = np.where(delta > 0, delta, 1.0)
    h = np.select(
        [delta == 0, mx == r, mx == g],
        [0.0, ((g - b) / safe) % 6.0, (b - r) / safe + 2.0],
        (r - g) / safe + 4.0,
    ) * 60.0
    h = np.where(h >= 360.0, h - 360.0, h)
    s = np.where(mx > 0, delta / np.where(mx > 0, mx, 1.0), 0.0)
    return np.stack([h, s, mx], axis=2)


def hsv_to_rgb(image: Tensor) -> np.ndarray:
    hsv = np.asarray(image, dtype=np.float64)
    h, s, v = hsv[..., 0] % 360.0, hsv[..., 1], hsv[..., 2]
    c = v * s
    hp = h / 60.0
    x = c * (1.0 - np.abs(hp % 2.0 - 1.0))
    zero = np.zeros_like(c)
    sector = np.floor(hp).astype(np.int64) % 6
    table = [(c, x, zero), (x, c, zero), (zero, c, x), (zero, x, c), (x, zero, c), (c, zero, x)]
    rgb = np.zeros(hsv.shape[:2] + (3,))
    for i, channels in enumerate(table):
        sel = sector == i
        for k in range(3):
            rgb[..., k] = np.where(sel, channels[k], rgb[..., k])
    return (rgb + (v - c)[..., None]) * 255.0


def rgb_to_ycrcb(image: Tensor) -> np.ndarray:
    """Full-range BT.601, channel order (Y, Cr, Cb), clamped to [0, 255]."""
    rgb = _rgb(image)
    y = rgb @ np.array([0.299, 0.587, 0.114])
    cr = (rgb[..., 0] - y) * 0.713 + 128.0
    cb = (rgb[..., 2] - y) * 0.564 + 128.0
    return np.clip(np.stack([y, cr, cb], axis=2), 0.0, 255.0)


def convert(image: Tensor, space: Union[str, ColorSpace]) -> np.ndarray:
    space = ColorSpace(space)
    if space is ColorSpace.HSV:
        return rgb_to_hsv(image)
    if space is ColorSpace.YCRCB:
        return rgb_to_ycrcb(image)
    return _rgb(image).copy()


def _foreground(image: np.ndarray, mask) -> np.ndarray:
    m = np.asarray(mask)
    if m.ndim == 3 and m.shape[2] == 1:
        m = m[:, :, 0]
    if m.shape != image.shape[:2]:
        raise ShapeError(f"mask {np.shape(mask)} does not match image {image.shape}")
    pixels = image[m > 0.5]
    if pixels.shape[0] == 0:
        raise DomainError("mask has no foreground pixels")
    return pixels


@dataclass(frozen=True)
class MomentVector:
    values: np.ndarray  # (c1 mean, std, skew, c2 ..., c3 ...)
    space: ColorSpace

    def as_array(self) -> np.ndarray:
        return self.values.copy()


def masked_color_moments(image: Tensor, mask, space: Union[str, ColorSpace] = config.DEFAULT_COLOR_SPACE) -> MomentVector:
    """
    Colour moments over the foreground of ``mask``

    Per channel of the converted image: mean, standard deviation and the
    signed cube root of the third central moment.

    Args:
        image: RGB (H, W, 3) on the [0, 255] scale
        mask: (H, W) or (H, W, 1) foreground mask
        space: Colour space the moments are taken in

    Returns:
        MomentVector of 9 values
    """
    space = ColorSpace(space)
    pixels = _foreground(convert(image, space), mask)
    mean = pixels.mean(axis=0)
    centred = pixels - mean
    std = np.sqrt((centred ** 2).mean(axis=0))
    skew = np.cbrt((centred ** 3).mean(axis=0))
    values = np.stack([mean, std, skew], axis=1).reshape(-1)
    return MomentVector(values=values, space=space)


@dataclass(frozen=True)
class HistogramVector:
    counts: np.ndarray  # (3, bins), each row sums to 1
    bins: int
    space: ColorSpace

    def as_array(self) -> np.ndarray:
        return self.counts.reshape(-1).copy()


def _bin_index(values: np.ndarray, lo: float, hi: float, bins: int) -> np.ndarray:
    idx = np.floor((values - lo) / (hi - lo) * bins).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


def masked_histogram(image: Tensor, mask, bins: int = 8,
                     space: Union[str, ColorSpace] = config.DEFAULT_COLOR_SPACE) -> HistogramVector:
    """Equal-width per-channel histograms of the masked pixels, normalized per channel."""
    if bins < 2:
        raise ParameterError(f"bins must be >= 2, got {bins}")
    space = ColorSpace(space)
    pixels = _foreground(convert(image, space), mask)
    counts = np.stack([
        np.bincount(_bin_index(pixels[:, c], lo, hi, bins), minlength=bins)
        for c, (lo, hi) in enumerate(CHANNEL_RANGES[space])
    ]).astype(np.float64)
    return HistogramVector(counts=counts / pixels.shape[0], bins=bins, space=space)


@dataclass(frozen=True)
class PCABasis:
    mean: np.ndarray
    components: np.ndarray  # (k, d), rows ordered by descending eigenvalue
    eigenvalues: np.ndarray

    @property
    def n_components(self) -> int:
        return self.components.shape[0]


def pca_fit(samples, n_components: Optional[int] = None) -> PCABasis:
    """Principal axes of the sample covariance; each axis has its largest-magnitude coordinate positive."""
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"samples must be (n, d), got {X.shape}")
    n, d = X.shape
    if n < 2:
        raise ParameterError(f"PCA needs at least 2 samples, got {n}")
    k = min(n, d) if n_components is None else n_components
    if not 1 <= k <= min(n, d):
        raise ParameterError(f"n_components must be in [1, {min(n, d)}], got {k}")
    mean = X.mean(axis=0)
    cov = np.cov(X - mean, rowvar=False).reshape(d, d)
    eigenvalues, vectors = np.linalg.eigh(cov)
    order = np.argsort(eigenvalues)[::-1][:k]
    components = vectors[:, order].T
    pivots = np.abs(components).argmax(axis=1)
    components *= np.sign(components[np.arange(k), pivots])[:, None]
    return PCABasis(mean=mean, components=components, eigenvalues=eigenvalues[order])


def pca_transform(basis: PCABasis, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != basis.mean.shape[0]:
        raise ShapeError(f"vector of length {x.shape[-1]} vs PCA dimension {basis.mean.shape[0]}")
    return (x - basis.mean) @ basis.components.T


def pca_inverse(basis: PCABasis, z) -> np.ndarray:
    return np.asarray(z, dtype=np.float64) @ basis.components + basis.mean


def feature_vector(image: Tensor, mask, method: str = "moments",
                   space: Union[str, ColorSpace] = config.DEFAULT_COLOR_SPACE) -> np.ndarray:
    """Flat feature vector: 9 moments, 3 x 8 or 3 x 256 histogram bins."""
    if method == "moments":
        return masked_color_moments(image, mask, space).as_array()
    if method == "hist8":
        return masked_histogram(image, mask, 8, space).as_array()
    if method == "hist256":
        return masked_histogram(image, mask, 256, space).as_array()
    raise ParameterError(f"unknown feature method {method!r}, expected one of {FEATURE_METHODS}")


def feature_names(method: str, space: Union[str, ColorSpace]) -> List[str]:
    channels = CHANNEL_NAMES[ColorSpace(space)]
    if method == "moments":
        return [f"{c}_{stat}" for c in channels for stat in ("mean", "std", "skew")]
    bins = {"hist8": 8, "hist256": 256}.get(method)
    if bins is None:
        raise ParameterError(f"unknown feature method {method!r}, expected one of {FEATURE_METHODS}")
    return [f"{c}_bin{i}" for c in channels for i in range(bins)]


def write_features_csv(path, features, labels, columns: Optional[Sequence[str]] = None) -> None:
    """Header row, one row per image, ``label`` column last."""
    features = np.asarray(features, dtype=np.float64)
    columns = list(columns) if columns is not None else [f"f{i}" for i in range(features.shape[1])]
    if len(columns) != features.shape[1]:
        raise ShapeError(f"{len(columns)} column names for {features.shape[1]} features")
    frame = pd.DataFrame(features, columns=columns)
    frame[LABEL_COLUMN] = np.asarray(labels, dtype=np.int64)
    frame.to_csv(path, index=False)
    logger.info("wrote %d feature rows to %s", len(frame), path)


def read_features_csv(path, class_names: Tuple[str, ...] = config.SKIN_TONE_CLASSES) -> Dataset:
    frame = pd.read_csv(path, float_precision="round_trip")
    if frame.columns[-1] != LABEL_COLUMN:
        raise ParameterError(f"{path}: last column must be '{LABEL_COLUMN}', got '{frame.columns[-1]}'")
    if frame.shape[1] < 2:
        raise ParameterError(f"{path}: no feature columns")
    features = frame.iloc[:, :-1].to_numpy(dtype=np.float64)
    return Dataset(features, frame[LABEL_COLUMN].to_numpy(dtype=np.int64), class_names)
