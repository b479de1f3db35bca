"""SegmentationEngine provides a high-level interface to the portrait pipeline.

It loads a weight file once, crops the optional face ROI, resizes it to the
network input, runs HLNet and maps the probability map back to the crop. The
refine, dye and grade operations build on that segmentation; the benchmark
times bare forward passes on a thread pool.
"""
import logging
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from . import config
from .core import colorfeat, facepipe, guidedfilter, hlnet, modelio
from .core.base import Box, GFParams, StructElement
from .core.errors import ParameterError
from .core.forest import Dataset, DecisionForest, predict
from .core.nnops import resize_bilinear
from .utils.image_io import label_map, read_image, read_label_mask
from .utils.synth import read_dataset_index

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Segmentation:
    box: Box
    prob: np.ndarray  # (box.h, box.w, K)

    @property
    def labels(self) -> np.ndarray:
        return label_map(self.prob)

    def paste(self, plane: np.ndarray, frame_shape: Tuple[int, int], fill: float = 0.0) -> np.ndarray:
        """Place a crop-sized array into a frame-sized one filled with ``fill``."""
        out = np.full(tuple(frame_shape) + plane.shape[2:], fill, dtype=np.float32)
        b = self.box
        out[b.y:b.y + b.h, b.x:b.x + b.w] = plane
        return out


def mask_options(run_config: dict) -> dict:
    """Keyword arguments of ``facepipe.face_mask`` taken from a run configuration."""
    b = run_config["bilateral"]
    return {"se": StructElement.square(run_config["erode_size"]),
            "d": b["d"], "sigma_color": b["sigma_color"], "sigma_space": b["sigma_space"]}


def onehot_prob(labels: np.ndarray, num_classes: int = config.NUM_CLASSES) -> np.ndarray:
    """Probability map that puts all mass on the given labels."""
    return np.eye(num_classes, dtype=np.float32)[np.asarray(labels, dtype=np.int64)]


class SegmentationEngine:
    """Holds a built model plus run settings and runs single-image pipeline steps."""

    def __init__(self, model: hlnet.HLNetModel, run_config: Optional[dict] = None):
        self.model = model
        self.run_config = run_config or config.load_run_config()

    @classmethod
    def from_weights(cls, path, run_config: Optional[dict] = None,
                     num_classes: int = config.NUM_CLASSES) -> "SegmentationEngine":
        """
        Load a .hlnw file and build the network

        Args:
            path: Weight file path
            run_config: Merged run configuration (defaults when None)
            num_classes: Output classes of the stored network

        Returns:
            SegmentationEngine
        """
        return cls(hlnet.build(modelio.load(path), num_classes), run_config)

    @property
    def gf_params(self) -> GFParams:
        return GFParams(**self.run_config["guided_filter"])

    def crop_box(self, image: np.ndarray, roi: Optional[Box] = None) -> Box:
        h, w = image.shape[:2]
        if roi is None:
            return Box(0, 0, w, h)
        return facepipe.expand_roi(roi, self.run_config["roi_factor"], (w, h))

    def segment(self, image: np.ndarray, roi: Optional[Box] = None) -> Segmentation:
        box = self.crop_box(image, roi)
        crop = box.crop(image)
        size = self.model.input_size
        net_in = resize_bilinear(crop, size, size) / 255.0
        prob = self.model.forward(net_in)
        prob = resize_bilinear(prob, box.h, box.w)
        logger.debug("segmented %s crop of a %s image", box, image.shape[:2])
        return Segmentation(box=box, prob=prob)

    def refine(self, image: np.ndarray, class_id: int = config.HAIR,
               roi: Optional[Box] = None) -> np.ndarray:
        """Full-frame (H, W, 1) alpha matte of ``class_id``; zero outside the crop."""
        seg = self.segment(image, roi)
        alpha = guidedfilter.refine_mask(seg.box.crop(image), seg.prob, class_id, self.gf_params)
        return seg.paste(alpha, image.shape[:2])

    def dye(self, image: np.ndarray, colour: Sequence[float], strength: float = 1.0,
            roi: Optional[Box] = None) -> np.ndarray:
        alpha = self.refine(image, config.HAIR, roi)
        return facepipe.dye_hair(image, alpha, colour, strength)

    def face_mask(self, image: np.ndarray, roi: Optional[Box] = None) -> Tuple[Box, np.ndarray]:
        seg = self.segment(image, roi)
        return seg.box, facepipe.face_mask(seg.prob, **mask_options(self.run_config))

    def grade(self, image: np.ndarray, forest: DecisionForest, roi: Optional[Box] = None,
              method: str = "moments", space: Optional[str] = None) -> Dict[str, object]:
        box, mask = self.face_mask(image, roi)
        x = colorfeat.feature_vector(box.crop(image), mask, method,
                                     space or self.run_config["color_space"])
        cls, votes = predict(forest, x)
        return {"class_id": cls, "class_name": forest.class_names[cls],
                "votes": [float(v) for v in votes]}


def dataset_features(data_dir, method: str = "moments", space: str = config.DEFAULT_COLOR_SPACE,
                     engine: Optional[SegmentationEngine] = None,
                     run_config: Optional[dict] = None) -> Tuple[Dataset, list]:
    """
    Masked colour features for every image listed in ``data_dir``/labels.csv

    The face mask comes from the truth mask when the index names one and the
    file exists; otherwise ``engine`` segments the image.

    Returns:
        (Dataset, list of image paths)
    """
    run_config = run_config or (engine.run_config if engine else config.load_run_config())
    options = mask_options(run_config)
    root = Path(data_dir)
    index = read_dataset_index(root)
    rows, labels, paths = [], [], []
    for record in index.itertuples(index=False):
        image = read_image(root / record.image)
        mask_file = root / record.mask if isinstance(getattr(record, "mask", None), str) else None
        if mask_file is not None and mask_file.exists():
            mask = facepipe.face_mask(onehot_prob(read_label_mask(mask_file)), **options)
        elif engine is not None:
            box, mask = engine.face_mask(image)
            image = box.crop(image)
        else:
            raise ParameterError(f"{record.image}: no truth mask and no weights to segment with")
        rows.append(colorfeat.feature_vector(image, mask, method, space))
        labels.append(int(record.label))
        paths.append(str(record.image))
    logger.info("extracted %s/%s features for %d images", method, space, len(rows))
    return Dataset(np.stack(rows), np.asarray(labels), config.SKIN_TONE_CLASSES), paths


def hardware_info() -> Dict[str, object]:
    return {
        "platform": platform.platform(),
        "machine": platform.machine(),
        "processor": platform.processor() or "unknown",
        "cpu_count": os.cpu_count(),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }


def benchmark(model: hlnet.HLNetModel, iterations: int = 20, warmup: int = 2,
              threads: int = 1, seed: int = config.SEED) -> Dict[str, object]:
    """Time ``iterations`` forward passes after ``warmup`` untimed ones."""
    if iterations < 1 or warmup < 0 or threads < 1:
        raise ParameterError("iterations and threads must be >= 1, warmup >= 0")
    size = model.input_size
    image = np.random.default_rng(seed).uniform(0, 1, (size, size, 3)).astype(np.float32)
    for _ in range(warmup):
        model.forward(image)

    def timed(_):
        start = time.perf_counter()
        model.forward(image)
        return (time.perf_counter() - start) * 1000.0

    with ThreadPoolExecutor(max_workers=threads) as pool:
        latencies = np.array(list(pool.map(timed, range(iterations))))
    mean = float(latencies.mean())
    report = {
        "iterations": iterations,
        "warmup": warmup,
        "threads": threads,
        "mean_ms": mean,
        "median_ms": float(np.median(latencies)),
        "p95_ms": float(np.percentile(latencies, 95)),
        "fps": 1000.0 / mean,
        "param_count": hlnet.param_count(model),
        "hardware": hardware_info(),
    }
    logger.info("forward %.1f ms mean over %d runs (%d threads)", mean, iterations, threads)
    return report


def pca_preprocess(n_components: int):
    """Fold transform for ``run_training``: PCA fitted on the training fold, applied to both."""
    def project(train: Dataset, test: Dataset) -> Tuple[Dataset, Dataset]:
        k = min(n_components, *train.features.shape)
        basis = colorfeat.pca_fit(train.features, k)
        logger.debug("PCA kept %d of %d dims", k, train.n_features)
        return (Dataset(colorfeat.pca_transform(basis, train.features), train.labels, train.class_names),
                Dataset(colorfeat.pca_transform(basis, test.features).reshape(len(test), k),
                        test.labels, test.class_names))
    return project
