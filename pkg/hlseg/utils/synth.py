"""Synthetic fixtures: a five-tone portrait dataset and 2-D Gaussian blobs.

Each portrait is a face-coloured ellipse with a dark hair band over its top on
a noisy random background, stored with its ground-truth label mask. The face
colour is the tone's base colour plus a per-image jitter and per-pixel noise.
"""
import logging
from pathlib import Path
from typing import Tuple

import numpy as np
import pandas as pd

from .. import config
from ..core.forest import Dataset
from .image_io import write_image, write_label_mask

logger = logging.getLogger(__name__)

# Base RGB per skin-tone class, in SKIN_TONE_CLASSES order
TONE_COLOURS = (
    (245, 222, 210),
    (232, 200, 170),
    (200, 155, 120),
    (215, 180, 110),
    (95, 65, 50),
)

TONE_JITTER = 8.0
PIXEL_NOISE = 4.0


def make_portrait(tone: int, size: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Return (image float32 (size, size, 3), labels int64 (size, size)) for one tone class."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cy = size * rng.uniform(0.48, 0.56)
    cx = size * rng.uniform(0.45, 0.55)
    ry = size * rng.uniform(0.28, 0.34)
    rx = size * rng.uniform(0.20, 0.26)
    face = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    head = ((yy - cy) / (ry * 1.15)) ** 2 + ((xx - cx) / (rx * 1.2)) ** 2 <= 1.0
    hair = head & (yy < cy - 0.45 * ry)

    labels = np.full((size, size), config.BACKGROUND, dtype=np.int64)
    labels[face] = config.FACE
    labels[hair] = config.HAIR

    image = rng.uniform(0, 255, 3) + rng.normal(0, 20.0, (size, size, 3))
    skin = np.asarray(TONE_COLOURS[tone], dtype=np.float64) + rng.uniform(-TONE_JITTER, TONE_JITTER, 3)
    image[labels == config.FACE] = skin + rng.normal(0, PIXEL_NOISE, (int((labels == config.FACE).sum()), 3))
    hair_rgb = rng.uniform(10, 60, 3)
    image[labels == config.HAIR] = hair_rgb + rng.normal(0, PIXEL_NOISE, (int((labels == config.HAIR).sum()), 3))
    return np.clip(np.rint(image), 0, 255).astype(np.float32), labels


def generate_skin_dataset(out_dir, count: int = 500, size: int = 96, seed: int = config.SEED) -> Path:
    """
    Write ``count`` synthetic portraits with truth masks and a labels.csv index

    Layout: images/NNNN.png, masks/NNNN.png, labels.csv (image, mask, label, tone).
    Classes are assigned round-robin so every tone gets count // 5 or more images.
    """
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    n_classes = len(config.SKIN_TONE_CLASSES)
    rows = []
    for i in range(count):
        tone = i % n_classes
        image, labels = make_portrait(tone, size, rng)
        name = f"{i:04d}.png"
        write_image(out / "images" / name, image)
        write_label_mask(out / "masks" / name, labels)
        rows.append({"image": f"images/{name}", "mask": f"masks/{name}", "label": tone,
                     "tone": config.SKIN_TONE_CLASSES[tone]})
    pd.DataFrame(rows).to_csv(out / "labels.csv", index=False)
    logger.info("wrote %d synthetic portraits to %s", count, out)
    return out


def read_dataset_index(data_dir) -> pd.DataFrame:
    return pd.read_csv(Path(data_dir) / "labels.csv")


def make_blobs(n: int = 200, seed: int = 7, centres=((-2.0, -2.0), (2.0, 2.0)),
               spread: float = 0.6) -> Dataset:
    """Two-class 2-D Gaussian blobs, ``n`` points split evenly."""
    rng = np.random.default_rng(seed)
    centres = np.asarray(centres, dtype=np.float64)
    labels = np.arange(n) % len(centres)
    features = centres[labels] + rng.normal(0.0, spread, (n, centres.shape[1]))
    names = tuple(f"blob{i}" for i in range(len(centres)))
    return Dataset(features, labels, names)
