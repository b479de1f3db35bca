import numpy as np
import pytest
from scipy import ndimage

from hlseg.core.base import GFParams
from hlseg.core.errors import ParameterError, ShapeError
from hlseg.core.guidedfilter import (
    box_filter, fast_guided_filter, guided_filter, guided_filter_naive, luma, refine_mask,
)


def test_box_filter_matches_uniform_filter(rng):
    x = rng.normal(size=(13, 17))
    for r in (0, 1, 3, 8):
        expected = ndimage.uniform_filter(x, size=2 * r + 1, mode="nearest")
        np.testing.assert_allclose(box_filter(x, r), expected, atol=1e-10)


def test_box_filter_keeps_channel_axis(rng):
    x = rng.normal(size=(6, 5, 2))
    out = box_filter(x, 2)
    assert out.shape == x.shape
    np.testing.assert_allclose(out[:, :, 1], box_filter(x[:, :, 1], 2))


def test_constant_input_is_a_fixed_point(rng):
    guide = rng.uniform(0, 255, (20, 24, 1))
    q = guided_filter(guide, np.full((20, 24, 1), 0.3), r=4, eps=50.0)
    np.testing.assert_allclose(q, 0.3, atol=1e-6)


def test_huge_eps_approaches_box_mean(rng):
    guide = rng.uniform(0, 255, (16, 16, 1))
    p = rng.uniform(0, 1, (16, 16, 1))
    q = guided_filter(guide, p, r=2, eps=1e12)
    oracle = box_filter(box_filter(p, 2), 2)
    assert np.abs(q - oracle).max() < 1e-3


def test_matches_windowed_least_squares_oracle():
    rng = np.random.default_rng(17)
    for _ in range(100):
        h, w = (int(v) for v in rng.integers(4, 10, size=2))
        r = int(rng.integers(1, 3))
        eps = float(rng.choice([1e-2, 1.0, 50.0]))
        guide = rng.uniform(0, 1, (h, w, 1))
        p = rng.uniform(0, 1, (h, w, 1))
        fast = guided_filter(guide, p, r, eps)
        assert np.abs(fast - guided_filter_naive(guide, p, r, eps)).max() < 1e-4


def test_guided_filter_rejects_mismatched_sizes():
    with pytest.raises(ShapeError):
        guided_filter(np.zeros((4, 4, 1)), np.zeros((4, 5, 1)))


def test_fast_filter_with_s1_is_exact(rng):
    guide = rng.uniform(0, 255, (32, 30, 1))
    p = rng.uniform(0, 1, (32, 30, 1))
    exact = guided_filter(guide, p, 4, 50.0)
    assert np.abs(fast_guided_filter(guide, p, 4, 50.0, s=1) - exact).max() < 1e-6


def test_fast_filter_rejects_s0():
    with pytest.raises(ParameterError):
        fast_guided_filter(np.zeros((8, 8, 1)), np.zeros((8, 8, 1)), s=0)


def test_fast_filter_constant_inputs():
    q = fast_guided_filter(np.full((40, 40, 1), 90.0), np.full((40, 40, 1), 0.7), 4, 50.0, 4)
    np.testing.assert_allclose(q, 0.7, atol=1e-5)


def test_fast_filter_snaps_transition_to_guidance_edge():
    # hard edge between columns 31 and 32, blurry mask ramp centred on it
    x = np.arange(64)
    guide = np.where(x < 32, 0.0, 255.0)[None, :, None].repeat(64, axis=0)
    mask = (1.0 / (1.0 + np.exp(-(x - 31.5) / 3.0)))[None, :, None].repeat(64, axis=0)
    q = fast_guided_filter(guide, mask, r=4, eps=50.0, s=4)[:, :, 0]
    assert (q[:, :30] < 0.5).all()
    assert (q[:, 34:] > 0.5).all()
    np.testing.assert_allclose(q, 1.0 - q[:, ::-1], atol=1e-4)


def test_luma_weights():
    np.testing.assert_allclose(luma(np.array([[[255.0, 0.0, 0.0]]]))[0, 0, 0], 76.245)


def test_refine_mask_full_probability(rng):
    image = rng.uniform(0, 255, (48, 40, 3))
    prob = np.zeros((48, 40, 3), dtype=np.float32)
    prob[:, :, 1] = 1.0
    alpha = refine_mask(image, prob, 1)
    assert alpha.shape == (48, 40, 1)
    assert alpha.min() >= 0.99
    assert alpha.max() <= 1.0


def test_refine_mask_rejects_bad_class(rng):
    prob = np.full((8, 8, 3), 1.0 / 3.0)
    with pytest.raises(ParameterError):
        refine_mask(rng.uniform(0, 255, (8, 8, 3)), prob, 3)


def test_refine_mask_rejects_size_mismatch(rng):
    with pytest.raises(ShapeError):
        refine_mask(rng.uniform(0, 255, (8, 9, 3)), np.full((8, 8, 3), 0.5), 1)


def test_default_params():
    assert (GFParams().s, GFParams().r, GFParams().eps) == (4, 4, 50.0)
