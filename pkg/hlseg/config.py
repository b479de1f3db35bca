"""
Configuration constants for the segmentation and skin-tone grading engine
"""

import copy
import os

import jsonschema
import yaml

from .core.errors import ParameterError

# Guided filter post-processing (s, r, eps)
GF_SUBSAMPLE = 4
GF_RADIUS = 4
GF_EPS = 50.0

# HLNet architecture
INPUT_SIZE = 224
NUM_CLASSES = 3
EXPANSION_FACTOR = 6
DILATION_RATES = (2, 4, 8)
FFM_REDUCTION = 4

# Class ids in a ProbMap
BACKGROUND, HAIR, FACE = 0, 1, 2
CLASS_NAMES = ("background", "hair", "face")

# Label mask palette: background blue, hair red, face green
LABEL_PALETTE = {
    BACKGROUND: (0, 0, 255),
    HAIR: (255, 0, 0),
    FACE: (0, 255, 0),
}

# Stage output shapes of the reference architecture for a 224x224x3 input
REFERENCE_TRACE = [
    ("input", (224, 224, 3)),
    ("stage1", (112, 112, 32)),
    ("stage2", (56, 56, 64)),
    ("stage3", (28, 28, 64)),
    ("stage4", (28, 28, 64)),
    ("stage5", (28, 28, 64)),
    ("stage6", (28, 28, 32)),
    ("stage7", (224, 224, 32)),
    ("stage8", (224, 224, 3)),
    ("stage9", (224, 224, 3)),
]

# Face ROI enlargement before segmentation
ROI_FACTOR = 0.8

# Facial region extraction
MASK_THRESHOLD = 0.5
ERODE_SIZE = 3
BILATERAL_D = 9
BILATERAL_SIGMA_COLOR = 75.0
BILATERAL_SIGMA_SPACE = 75.0

# Skin-tone grading
SKIN_TONE_CLASSES = ("porcelain white", "ivory white", "medium", "yellowish", "black")
DEFAULT_COLOR_SPACE = "ycrcb"
PCA_COMPONENTS = 32
TEST_FRACTION = 0.2
SEED = 42

# Random forest defaults
N_TREES = 100
MIN_SAMPLES_SPLIT = 2

# Poly learning-rate schedule
POLY_POWER = 0.9
BASE_LR = 2.5e-3

# Environment variable overriding the worker thread count
THREADS_ENV = "HLSEG_THREADS"

DEFAULT_RUN_CONFIG = {
    "seed": SEED,
    "threads": 1,
    "roi_factor": ROI_FACTOR,
    "guided_filter": {"s": GF_SUBSAMPLE, "r": GF_RADIUS, "eps": GF_EPS},
    "bilateral": {"d": BILATERAL_D, "sigma_color": BILATERAL_SIGMA_COLOR,
                  "sigma_space": BILATERAL_SIGMA_SPACE},
    "erode_size": ERODE_SIZE,
    "color_space": DEFAULT_COLOR_SPACE,
    "pca_components": PCA_COMPONENTS,
    "forest": {
        "n_trees": N_TREES,
        "max_depth": None,
        "min_samples_split": MIN_SAMPLES_SPLIT,
        "features_per_split": None,
    },
    "test_fraction": TEST_FRACTION,
    "split_first": False,
    "bench": {"iterations": 20, "warmup": 2},
}

_POS_INT = {"type": "integer", "minimum": 1}
_OPT_POS_INT = {"type": ["integer", "null"], "minimum": 1}

RUN_CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "threads": _POS_INT,
        "roi_factor": {"type": "number", "minimum": 0},
        "guided_filter": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"s": _POS_INT, "r": _POS_INT,
                           "eps": {"type": "number", "exclusiveMinimum": 0}},
        },
        "bilateral": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"d": {"type": "integer", "minimum": 3},
                           "sigma_color": {"type": "number", "exclusiveMinimum": 0},
                           "sigma_space": {"type": "number", "exclusiveMinimum": 0}},
        },
        "erode_size": {"type": "integer", "minimum": 1},
        "color_space": {"enum": ["rgb", "hsv", "ycrcb"]},
        "pca_components": _POS_INT,
        "forest": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"n_trees": _POS_INT, "max_depth": _OPT_POS_INT,
                           "min_samples_split": {"type": "integer", "minimum": 2},
                           "features_per_split": _OPT_POS_INT},
        },
        "test_fraction": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "split_first": {"type": "boolean"},
        "bench": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"iterations": _POS_INT,
                           "warmup": {"type": "integer", "minimum": 0}},
        },
    },
}


def _deep_merge(base: dict, override: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_run_config(path=None) -> dict:
    """
    Load a YAML run configuration and merge it over DEFAULT_RUN_CONFIG

    Args:
        path: YAML file path, or None for the defaults

    Returns:
        Merged configuration dictionary
    """
    if path is None:
        return copy.deepcopy(DEFAULT_RUN_CONFIG)
    with open(path, 'r') as f:
        data = yaml.safe_load(f) or {}
    try:
        jsonschema.validate(instance=data, schema=RUN_CONFIG_SCHEMA)
    except jsonschema.exceptions.ValidationError as e:
        where = ".".join(str(p) for p in e.path) or "<root>"
        raise ParameterError(f"invalid run config {path}: {e.message} at '{where}'") from e
    return _deep_merge(DEFAULT_RUN_CONFIG, data)


def resolve_threads(cli_value=None) -> int:
    """Thread count: HLSEG_THREADS wins over the CLI flag, which wins over 1."""
    raw = os.environ.get(THREADS_ENV)
    if raw is not None and raw.strip():
        try:
            value = int(raw)
        except ValueError:
            raise ParameterError(f"{THREADS_ENV} must be an integer, got {raw!r}")
    else:
        value = cli_value if cli_value is not None else 1
    if value < 1:
        raise ParameterError(f"thread count must be >= 1, got {value}")
    return value
