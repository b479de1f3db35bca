"""Image and mask files (PNG, binary PPM) through Pillow.

Colour images come back as float32 (H, W, 3) on the [0, 255] scale. Label
masks are int64 (H, W) class-id arrays; on disk they are RGB images in the
label palette (background blue, hair red, face green).
"""
from pathlib import Path

import numpy as np
from PIL import Image

from .. import config
from ..core.errors import ParameterError, ShapeError


def read_image(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float32)


def to_uint8(image) -> np.ndarray:
    return np.clip(np.rint(np.asarray(image, dtype=np.float64)), 0, 255).astype(np.uint8)


def write_image(path, image) -> None:
    arr = to_uint8(image)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(path)


def write_alpha(path, alpha) -> None:
    """Store a [0, 1] matte as an 8-bit grayscale image."""
    write_image(path, np.clip(np.asarray(alpha, dtype=np.float64), 0.0, 1.0) * 255.0)


def label_map(prob) -> np.ndarray:
    """Per-pixel argmax class of a probability map."""
    return np.asarray(prob).argmax(axis=2).astype(np.int64)


def colorize_labels(labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 2:
        raise ShapeError(f"label mask must be (H, W), got {labels.shape}")
    unknown = set(np.unique(labels).tolist()) - set(config.LABEL_PALETTE)
    if unknown:
        raise ParameterError(f"label ids {sorted(unknown)} have no palette colour")
    palette = np.zeros((max(config.LABEL_PALETTE) + 1, 3), dtype=np.uint8)
    for class_id, rgb in config.LABEL_PALETTE.items():
        palette[class_id] = rgb
    return palette[labels]


def write_label_mask(path, labels) -> None:
    write_image(path, colorize_labels(labels))


def read_label_mask(path) -> np.ndarray:
    """Class ids from a palette-coloured mask, or from a single-channel id image."""
    with Image.open(path) as im:
        if im.mode in ("L", "P", "I"):
            return np.asarray(im, dtype=np.int64)
        rgb = np.asarray(im.convert("RGB"), dtype=np.int64)
    labels = np.full(rgb.shape[:2], -1, dtype=np.int64)
    for class_id, colour in config.LABEL_PALETTE.items():
        labels[(rgb == np.array(colour)).all(axis=2)] = class_id
    if (labels < 0).any():
        bad = tuple(int(v) for v in rgb[labels < 0][0])
        raise ParameterError(f"{path}: colour {bad} is not in the label palette")
    return labels
