import numpy as np
import pytest

from hlseg import config
from hlseg.core import facepipe, hlnet
from hlseg.core.base import Box
from hlseg.core.forest import Dataset, ForestParams, fit, run_training
from hlseg.engine import (
    SegmentationEngine, benchmark, dataset_features, hardware_info, onehot_prob, pca_preprocess,
)
from hlseg.utils.image_io import read_image, read_label_mask
from hlseg.utils.synth import TONE_COLOURS, make_portrait, read_dataset_index


@pytest.fixture(scope="module")
def engine(default_model):
    return SegmentationEngine(default_model)


@pytest.fixture
def portrait():
    image, labels = make_portrait(2, 96, np.random.default_rng(1))
    return image, labels


def test_segment_full_frame(engine, rng):
    image = rng.uniform(0, 255, (80, 100, 3)).astype(np.float32)
    seg = engine.segment(image)
    assert seg.box == Box(0, 0, 100, 80)
    assert seg.prob.shape == (80, 100, 3)
    np.testing.assert_allclose(seg.prob.sum(axis=2), 1.0, atol=1e-5)
    assert seg.labels.shape == (80, 100)


def test_segment_expands_roi(engine, rng):
    image = rng.uniform(0, 255, (200, 200, 3)).astype(np.float32)
    seg = engine.segment(image, Box(60, 60, 50, 50))
    assert seg.box == facepipe.expand_roi(Box(60, 60, 50, 50), config.ROI_FACTOR, (200, 200))
    assert seg.prob.shape[:2] == (seg.box.h, seg.box.w)


def test_refine_is_zero_outside_crop(engine, rng):
    image = rng.uniform(0, 255, (120, 120, 3)).astype(np.float32)
    alpha = engine.refine(image, config.HAIR, Box(40, 40, 30, 30))
    assert alpha.shape == (120, 120, 1)
    assert alpha.min() >= 0.0 and alpha.max() <= 1.0
    assert not alpha[:10].any()


def test_dye_with_zero_strength_returns_image(engine, portrait):
    image, _ = portrait
    np.testing.assert_allclose(engine.dye(image, (200, 30, 30), strength=0.0), image, atol=1e-4)


def test_segmentation_is_deterministic(default_store, portrait):
    image, _ = portrait
    a = SegmentationEngine(hlnet.build(default_store)).segment(image).labels
    b = SegmentationEngine(hlnet.build(default_store)).segment(image).labels
    np.testing.assert_array_equal(a, b)


def test_grade_returns_class_and_votes(engine, blobs, rng, monkeypatch):
    image = rng.uniform(0, 255, (64, 64, 3)).astype(np.float32)
    # nine columns so the forest accepts a moment vector
    features = np.repeat(blobs.features, [5, 4], axis=1)
    forest = fit(Dataset(features, blobs.labels, blobs.class_names), ForestParams(n_trees=3))
    full_face = facepipe.face_mask(onehot_prob(np.full((64, 64), config.FACE)))
    monkeypatch.setattr(engine, "face_mask", lambda img, roi=None: (Box(0, 0, 64, 64), full_face))
    result = engine.grade(image, forest, method="moments")
    assert result["class_name"] in ("blob0", "blob1")
    assert result["class_id"] in (0, 1)
    assert sum(result["votes"]) == pytest.approx(1.0)


def test_onehot_prob():
    prob = onehot_prob(np.array([[0, 2], [1, 1]]))
    assert prob.shape == (2, 2, 3)
    np.testing.assert_array_equal(prob.argmax(axis=2), [[0, 2], [1, 1]])


def test_synthetic_dataset_layout(small_skin_dataset):
    index = read_dataset_index(small_skin_dataset)
    assert list(index.columns) == ["image", "mask", "label", "tone"]
    assert len(index) == 25
    assert index["label"].value_counts().tolist() == [5] * 5
    image = read_image(small_skin_dataset / index["image"][0])
    labels = read_label_mask(small_skin_dataset / index["mask"][0])
    assert image.shape == (48, 48, 3)
    assert set(np.unique(labels)) == {config.BACKGROUND, config.HAIR, config.FACE}


def test_portrait_face_pixels_carry_the_tone(portrait):
    image, labels = portrait
    face = image[labels == config.FACE].mean(axis=0)
    assert np.abs(face - TONE_COLOURS[2]).max() < 12


def test_dataset_features_from_truth_masks(small_skin_dataset):
    data, paths = dataset_features(small_skin_dataset, "moments", "ycrcb")
    assert data.features.shape == (25, 9)
    assert paths[0] == "images/0000.png"
    np.testing.assert_array_equal(data.labels, np.arange(25) % 5)


def test_pca_preprocess_fits_on_training_fold(small_skin_dataset):
    data, _ = dataset_features(small_skin_dataset, "hist256", "ycrcb")
    report = run_training(data, ForestParams(n_trees=5), 0.2, seed=1, preprocess=pca_preprocess(8))
    assert report.train.n_features == 8
    assert report.test.n_features == 8


def test_benchmark_report(default_model):
    report = benchmark(default_model, iterations=1, warmup=0)
    assert report["iterations"] == 1
    assert report["fps"] == pytest.approx(1000.0 / report["mean_ms"])
    assert report["param_count"] > 0
    assert report["hardware"] == hardware_info()


def test_benchmark_on_a_thread_pool(default_model):
    report = benchmark(default_model, iterations=4, warmup=1, threads=2)
    assert report["threads"] == 2
    assert report["median_ms"] > 0


@pytest.mark.perf
def test_single_thread_forward_latency(default_model):
    report = benchmark(default_model, iterations=5, warmup=2, threads=1)
    assert report["median_ms"] <= 250.0, report


@pytest.mark.slow
def test_grading_pipeline_on_synthetic_dataset(skin_dataset):
    index = read_dataset_index(skin_dataset)
    assert len(index) == 500
    data, _ = dataset_features(skin_dataset, "moments", config.DEFAULT_COLOR_SPACE)
    report = run_training(data, ForestParams(), config.TEST_FRACTION, config.SEED)
    assert report.confusion.accuracy >= 0.90, report.confusion.counts
