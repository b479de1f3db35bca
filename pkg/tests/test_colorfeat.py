import numpy as np
import pytest

from hlseg.core import colorfeat
from hlseg.core.errors import DomainError, ParameterError


def px(*rgb):
    return np.array([[rgb]], dtype=np.float64)


def test_hsv_reference_colours():
    np.testing.assert_allclose(colorfeat.rgb_to_hsv(px(255, 0, 0))[0, 0], [0.0, 1.0, 1.0])
    np.testing.assert_allclose(colorfeat.rgb_to_hsv(px(0, 255, 0))[0, 0], [120.0, 1.0, 1.0])
    np.testing.assert_allclose(colorfeat.rgb_to_hsv(px(0, 0, 255))[0, 0], [240.0, 1.0, 1.0])
    gray = colorfeat.rgb_to_hsv(px(128, 128, 128))[0, 0]
    assert gray[1] == 0.0
    assert gray[2] == pytest.approx(128 / 255)


def test_hsv_round_trip(rng):
    image = rng.integers(0, 256, (30, 30, 3)).astype(np.float64)
    hsv = colorfeat.rgb_to_hsv(image)
    assert hsv[..., 0].min() >= 0.0 and hsv[..., 0].max() < 360.0
    assert np.abs(colorfeat.hsv_to_rgb(hsv) - image).max() <= 1.0


def test_ycrcb_reference_colours():
    np.testing.assert_allclose(colorfeat.rgb_to_ycrcb(px(0, 0, 0))[0, 0], [0.0, 128.0, 128.0])
    np.testing.assert_allclose(colorfeat.rgb_to_ycrcb(px(255, 255, 255))[0, 0], [255.0, 128.0, 128.0], atol=1e-9)
    y, cr, cb = colorfeat.rgb_to_ycrcb(px(255, 0, 0))[0, 0]
    assert y == pytest.approx(76.245)
    assert cr == 255.0
    assert cb == pytest.approx(85.0, abs=0.1)


def test_uniform_region_moments(rng):
    image = np.full((6, 6, 3), 40.0)
    mask = rng.uniform(size=(6, 6)) > 0.3
    mask[0, 0] = True
    m = colorfeat.masked_color_moments(image, mask, "rgb").as_array()
    np.testing.assert_allclose(m, [40, 0, 0] * 3, atol=1e-12)


def test_symmetric_pair_moments():
    image = np.zeros((1, 2, 3))
    image[0, 1] = 2.0
    m = colorfeat.masked_color_moments(image, np.ones((1, 2)), "rgb").as_array().reshape(3, 3)
    np.testing.assert_allclose(m, [[1.0, 1.0, 0.0]] * 3, atol=1e-12)


def test_moments_match_two_pass_oracle(rng):
    for space in ("rgb", "hsv", "ycrcb"):
        image = rng.uniform(0, 255, (10, 12, 3))
        mask = rng.uniform(size=(10, 12, 1)) > 0.5
        got = colorfeat.masked_color_moments(image, mask, space).as_array()
        pixels = colorfeat.convert(image, space)[mask[:, :, 0]]
        expected = []
        for c in range(3):
            values = pixels[:, c]
            mean = sum(values) / len(values)
            var = sum((v - mean) ** 2 for v in values) / len(values)
            m3 = sum((v - mean) ** 3 for v in values) / len(values)
            expected += [mean, var ** 0.5, np.sign(m3) * abs(m3) ** (1 / 3)]
        assert np.abs(got - expected).max() < 1e-6


def test_moments_ignore_masked_out_pixels_and_order(rng):
    image = rng.uniform(0, 255, (8, 8, 3))
    mask = rng.uniform(size=(8, 8)) > 0.5
    base = colorfeat.masked_color_moments(image, mask, "rgb").as_array()
    other = image.copy()
    other[~mask] = 0.0
    np.testing.assert_allclose(colorfeat.masked_color_moments(other, mask, "rgb").as_array(), base)
    perm = rng.permutation(64)
    shuffled = image.reshape(64, 3)[perm].reshape(8, 8, 3)
    np.testing.assert_allclose(
        colorfeat.masked_color_moments(shuffled, mask.reshape(64)[perm].reshape(8, 8), "rgb").as_array(),
        base, atol=1e-9)


def test_moment_shift_invariance(rng):
    image = rng.uniform(0, 200, (9, 9, 3))
    mask = np.ones((9, 9))
    a = colorfeat.masked_color_moments(image, mask, "rgb").as_array().reshape(3, 3)
    b = colorfeat.masked_color_moments(image + 17.0, mask, "rgb").as_array().reshape(3, 3)
    np.testing.assert_allclose(b[:, 0], a[:, 0] + 17.0, atol=1e-6)
    np.testing.assert_allclose(b[:, 1:], a[:, 1:], atol=1e-6)


def test_empty_mask_is_a_domain_error():
    with pytest.raises(DomainError):
        colorfeat.masked_color_moments(np.ones((3, 3, 3)), np.zeros((3, 3)))
    with pytest.raises(DomainError):
        colorfeat.masked_histogram(np.ones((3, 3, 3)), np.zeros((3, 3)))


def test_uniform_region_histogram():
    h = colorfeat.masked_histogram(np.full((4, 4, 3), 100.0), np.ones((4, 4)), 8, "rgb")
    assert h.counts.shape == (3, 8)
    np.testing.assert_array_equal(h.counts[:, 3], 1.0)
    assert h.counts.sum() == pytest.approx(3.0)


def test_two_bin_histogram():
    image = np.zeros((1, 2, 3))
    image[0, 0] = 10.0
    image[0, 1] = 200.0
    h = colorfeat.masked_histogram(image, np.ones((1, 2)), 2, "rgb")
    np.testing.assert_allclose(h.counts, [[0.5, 0.5]] * 3)


def test_histogram_matches_counting_oracle(rng):
    image = rng.integers(0, 256, (12, 11, 3)).astype(np.float64)
    mask = rng.uniform(size=(12, 11)) > 0.4
    for space, bins in (("rgb", 8), ("ycrcb", 256), ("hsv", 8)):
        h = colorfeat.masked_histogram(image, mask, bins, space)
        pixels = colorfeat.convert(image, space)[mask]
        expected = np.zeros((3, bins))
        for p in pixels:
            for c, (lo, hi) in enumerate(colorfeat.CHANNEL_RANGES[colorfeat.ColorSpace(space)]):
                expected[c, min(int((p[c] - lo) / (hi - lo) * bins), bins - 1)] += 1
        np.testing.assert_allclose(h.counts, expected / len(pixels), atol=1e-12)


def test_histogram_of_disjoint_union_is_weighted_mixture(rng):
    image = rng.uniform(0, 255, (10, 10, 3))
    a = np.zeros((10, 10), dtype=bool)
    a[:3] = True
    b = np.zeros((10, 10), dtype=bool)
    b[5:] = True
    ha = colorfeat.masked_histogram(image, a, 8, "rgb").counts
    hb = colorfeat.masked_histogram(image, b, 8, "rgb").counts
    hab = colorfeat.masked_histogram(image, a | b, 8, "rgb").counts
    np.testing.assert_allclose(hab, (30 * ha + 50 * hb) / 80, atol=1e-12)


def test_histogram_needs_two_bins():
    with pytest.raises(ParameterError):
        colorfeat.masked_histogram(np.ones((2, 2, 3)), np.ones((2, 2)), 1)


def test_pca_on_collinear_points():
    t = np.linspace(-3, 3, 25)
    basis = colorfeat.pca_fit(np.stack([t, t], axis=1))
    np.testing.assert_allclose(basis.components[0], [2 ** -0.5, 2 ** -0.5], atol=1e-12)
    assert abs(basis.eigenvalues[1]) < 1e-9


def test_pca_full_reconstruction(rng):
    X = rng.normal(size=(30, 6))
    basis = colorfeat.pca_fit(X)
    np.testing.assert_allclose(colorfeat.pca_inverse(basis, colorfeat.pca_transform(basis, X)), X, atol=1e-6)


def test_pca_eigenvalues_match_characteristic_polynomial(rng):
    X = rng.normal(size=(40, 3)) @ rng.normal(size=(3, 3))
    basis = colorfeat.pca_fit(X)
    cov = np.cov(X, rowvar=False)
    # det(cov - l*I) = -l^3 + tr*l^2 - m2*l + det
    m2 = sum(np.linalg.det(np.delete(np.delete(cov, i, 0), i, 1)) for i in range(3))
    roots = np.sort(np.roots([-1.0, np.trace(cov), -m2, np.linalg.det(cov)]).real)[::-1]
    np.testing.assert_allclose(basis.eigenvalues, roots, atol=1e-8)


def test_pca_sign_convention_and_ordering(rng):
    basis = colorfeat.pca_fit(rng.normal(size=(50, 4)) * [5, 3, 2, 1])
    assert np.all(np.diff(basis.eigenvalues) <= 0)
    for row in basis.components:
        assert row[np.abs(row).argmax()] > 0


def test_pca_component_bounds(rng):
    with pytest.raises(ParameterError):
        colorfeat.pca_fit(rng.normal(size=(10, 3)), 4)
    with pytest.raises(ParameterError):
        colorfeat.pca_fit(rng.normal(size=(1, 3)))


def test_feature_vector_lengths(rng):
    image = rng.uniform(0, 255, (5, 5, 3))
    mask = np.ones((5, 5))
    assert colorfeat.feature_vector(image, mask, "moments").shape == (9,)
    assert colorfeat.feature_vector(image, mask, "hist8").shape == (24,)
    assert colorfeat.feature_vector(image, mask, "hist256").shape == (768,)
    assert len(colorfeat.feature_names("hist8", "hsv")) == 24
    assert colorfeat.feature_names("moments", "ycrcb")[:3] == ["y_mean", "y_std", "y_skew"]
    with pytest.raises(ParameterError):
        colorfeat.feature_vector(image, mask, "correlogram")


def test_features_csv_round_trip(tmp_path, rng):
    features = rng.normal(size=(12, 9))
    labels = np.arange(12) % 5
    path = tmp_path / "features.csv"
    colorfeat.write_features_csv(path, features, labels, colorfeat.feature_names("moments", "ycrcb"))
    assert path.read_text().splitlines()[0].endswith(",label")
    data = colorfeat.read_features_csv(path)
    np.testing.assert_array_equal(data.features, features)
    np.testing.assert_array_equal(data.labels, labels)


def test_features_csv_requires_label_last(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("label,a\n0,1.0\n")
    with pytest.raises(ParameterError):
        colorfeat.read_features_csv(path)
